//! Stroke samples to drawable geometry: dots, straight lines and
//! endpoint-interpolating least-squares cubic Bézier chains.

use serde::{Deserialize, Serialize};

use crate::geom::{PixelPoint, PixelRect};
use crate::render::coords::pixel_of_clamped;
use crate::stroke::{CoordinateFrame, Stroke};

/// Adjacent samples closer than this are the same point (a doubled corner).
pub const CORNER_EPS: f64 = 1e-6;
/// Largest t gap between the two copies of a corner.
pub const CORNER_MAX_DT: f64 = 0.1;
/// Longest run fitted by a single cubic.
pub const MAX_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicBezier {
    pub p0: PixelPoint,
    pub p1: PixelPoint,
    pub p2: PixelPoint,
    pub p3: PixelPoint,
}

/// Bernstein basis of degree 3 at `t`.
#[inline]
pub fn bernstein(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [s * s * s, 3.0 * t * s * s, 3.0 * t * t * s, t * t * t]
}

impl CubicBezier {
    pub fn eval(&self, t: f64) -> PixelPoint {
        let [b0, b1, b2, b3] = bernstein(t);
        self.p0 * b0 + self.p1 * b1 + self.p2 * b2 + self.p3 * b3
    }

    /// `n + 1` evenly spaced points in parameter space.
    pub fn flatten(&self, n: usize) -> Vec<PixelPoint> {
        let n = n.max(1);
        (0..=n).map(|i| self.eval(i as f64 / n as f64)).collect()
    }

    /// Exact axis-aligned bounds of the curve (not of its control polygon).
    pub fn bounds(&self) -> PixelRect {
        let mut ts = vec![0.0, 1.0];
        for (a0, a1, a2, a3) in [
            (self.p0.x, self.p1.x, self.p2.x, self.p3.x),
            (self.p0.y, self.p1.y, self.p2.y, self.p3.y),
        ] {
            // derivative / 3 = a t^2 + b t + c
            let a = -a0 + 3.0 * a1 - 3.0 * a2 + a3;
            let b = 2.0 * (a0 - 2.0 * a1 + a2);
            let c = a1 - a0;
            if a.abs() < 1e-12 {
                if b.abs() > 1e-12 {
                    ts.push(-c / b);
                }
            } else {
                let disc = b * b - 4.0 * a * c;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    ts.push((-b + sq) / (2.0 * a));
                    ts.push((-b - sq) / (2.0 * a));
                }
            }
        }
        PixelRect::bounding(ts.into_iter().filter(|t| (0.0..=1.0).contains(t)).map(|t| self.eval(t)))
            .expect("at least the endpoints")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathPrimitive {
    Dot { center: PixelPoint, radius: f64 },
    Line { a: PixelPoint, b: PixelPoint },
    CubicChain { segments: Vec<CubicBezier> },
}

impl PathPrimitive {
    pub fn start(&self) -> PixelPoint {
        match self {
            Self::Dot { center, .. } => *center,
            Self::Line { a, .. } => *a,
            Self::CubicChain { segments } => segments[0].p0,
        }
    }

    pub fn end(&self) -> PixelPoint {
        match self {
            Self::Dot { center, .. } => *center,
            Self::Line { b, .. } => *b,
            Self::CubicChain { segments } => segments[segments.len() - 1].p3,
        }
    }

    /// Tight bounds of the drawn centerline (dots include their radius).
    pub fn bounds(&self) -> PixelRect {
        match self {
            Self::Dot { center, radius } => PixelRect::from_center(*center, *radius, *radius),
            Self::Line { a, b } => PixelRect::new(a.x, a.y, b.x, b.y),
            Self::CubicChain { segments } => segments
                .iter()
                .map(CubicBezier::bounds)
                .reduce(|a, b| a.union(&b))
                .expect("chains are non-empty"),
        }
    }

    /// Polyline approximation used by the rasterizer.
    pub fn polyline(&self, per_cubic: usize) -> Vec<PixelPoint> {
        match self {
            Self::Dot { center, .. } => vec![*center],
            Self::Line { a, b } => vec![*a, *b],
            Self::CubicChain { segments } => {
                let mut out = vec![segments[0].p0];
                for s in segments {
                    out.extend(s.flatten(per_cubic).into_iter().skip(1));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FitError {
    #[error("cubic fit needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{points} samples but {ts} parameters")]
    LengthMismatch { points: usize, ts: usize },
    #[error("normal equations are singular")]
    DegenerateSystem,
}

/// A maximal corner-free stretch of a stroke, with parameters rescaled to
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub points: Vec<PixelPoint>,
    pub ts: Vec<f64>,
}

fn renormalize(ts: &[f64]) -> Vec<f64> {
    match ts.len() {
        0 => Vec::new(),
        1 => vec![0.0],
        n => {
            let (a, b) = (ts[0], ts[n - 1]);
            if b > a {
                let mut out: Vec<f64> = ts.iter().map(|t| (t - a) / (b - a)).collect();
                out[0] = 0.0;
                out[n - 1] = 1.0;
                out
            } else {
                (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
            }
        }
    }
}

fn is_corner(points: &[PixelPoint], ts: &[f64], i: usize) -> bool {
    points[i].dist(points[i + 1]) <= CORNER_EPS && (ts[i + 1] - ts[i]).abs() <= CORNER_MAX_DT + 1e-12
}

/// Splits samples at doubled corner points. Each copy of a corner closes one
/// run and opens the next, so run lengths sum to the input length.
pub fn split_corners(points: &[PixelPoint], ts: &[f64]) -> Vec<Run> {
    assert_eq!(points.len(), ts.len(), "split_corners: length mismatch");
    if points.is_empty() {
        return Vec::new();
    }
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 0..points.len() - 1 {
        if is_corner(points, ts, i) {
            runs.push((start, i + 1));
            start = i + 1;
        }
    }
    runs.push((start, points.len()));
    runs.into_iter()
        .map(|(a, b)| Run { points: points[a..b].to_vec(), ts: renormalize(&ts[a..b]) })
        .collect()
}

/// Least-squares cubic through `points` at parameters `ts` with its ends
/// pinned to the first and last sample.
///
/// The inner control points solve the 2×2 normal equations per axis. With a
/// single interior sample the system has rank one; the solution closest to
/// the straight-line cubic is taken, which interpolates that sample.
pub fn fit_cubic(points: &[PixelPoint], ts: &[f64]) -> Result<CubicBezier, FitError> {
    if points.len() != ts.len() {
        return Err(FitError::LengthMismatch { points: points.len(), ts: ts.len() });
    }
    if points.len() < 3 {
        return Err(FitError::TooFewSamples(points.len()));
    }
    let p0 = points[0];
    let p3 = points[points.len() - 1];
    let d1 = p0.lerp(p3, 1.0 / 3.0);
    let d2 = p0.lerp(p3, 2.0 / 3.0);

    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    let (mut r1, mut r2) = (PixelPoint::default(), PixelPoint::default());
    let mut informative = 0usize;
    for (&q, &t) in points.iter().zip(ts) {
        let [b0, b1, b2, b3] = bernstein(t);
        if b1 != 0.0 || b2 != 0.0 {
            informative += 1;
        }
        // residual after the pinned endpoints and the straight-line default
        let res = q - p0 * b0 - p3 * b3 - d1 * b1 - d2 * b2;
        a11 += b1 * b1;
        a12 += b1 * b2;
        a22 += b2 * b2;
        r1 = r1 + res * b1;
        r2 = r2 + res * b2;
    }
    let trace = a11 + a22;
    if trace < 1e-14 {
        return Err(FitError::DegenerateSystem);
    }
    let det = a11 * a22 - a12 * a12;
    let (dp1, dp2) = if det > 1e-10 * trace * trace {
        ((r1 * a22 - r2 * a12) * (1.0 / det), (r2 * a11 - r1 * a12) * (1.0 / det))
    } else if informative == 1 {
        // pseudo-inverse of the rank-one matrix M is M / trace^2
        let k = 1.0 / (trace * trace);
        ((r1 * a11 + r2 * a12) * k, (r1 * a12 + r2 * a22) * k)
    } else {
        return Err(FitError::DegenerateSystem);
    };
    let curve = CubicBezier { p0, p1: d1 + dp1, p2: d2 + dp2, p3 };
    if !(curve.p1.is_finite() && curve.p2.is_finite()) {
        return Err(FitError::DegenerateSystem);
    }
    Ok(curve)
}

/// Sum of squared distances between samples and the curve at their `ts`.
pub fn residual_sum_squares(curve: &CubicBezier, points: &[PixelPoint], ts: &[f64]) -> f64 {
    points.iter().zip(ts).map(|(&q, &t)| curve.eval(t).dist2(q)).sum()
}

/// Dot radius for an image of the given width.
pub fn dot_radius(width: u32) -> f64 {
    4.0 * width as f64 / 1000.0
}

/// Index boundaries of consecutive windows of at most [`MAX_WINDOW`]
/// samples that share their end samples.
fn window_bounds(n: usize) -> Vec<usize> {
    let spans = n - 1;
    let k = spans.div_ceil(MAX_WINDOW - 1).max(1);
    (0..=k).map(|i| ((i * spans) as f64 / k as f64).round() as usize).collect()
}

/// Geometry for one stroke. Text strokes have none.
pub fn stroke_to_primitives(stroke: &Stroke, frame: &CoordinateFrame, width: u32, height: u32) -> Vec<PathPrimitive> {
    if stroke.is_text() || stroke.points.is_empty() {
        return Vec::new();
    }
    let pts: Vec<PixelPoint> =
        stroke.points.iter().map(|&r| pixel_of_clamped(r, frame, width, height)).collect();
    let ts: Vec<f64> = if stroke.t_values.len() == pts.len() {
        stroke.t_values.clone()
    } else {
        renormalize(&(0..pts.len()).map(|i| i as f64).collect::<Vec<_>>())
    };
    match pts.len() {
        1 => return vec![PathPrimitive::Dot { center: pts[0], radius: dot_radius(width) }],
        2 => return vec![PathPrimitive::Line { a: pts[0], b: pts[1] }],
        _ => {}
    }

    let mut out = Vec::new();
    let mut chain: Vec<CubicBezier> = Vec::new();
    let flush = |chain: &mut Vec<CubicBezier>, out: &mut Vec<PathPrimitive>| {
        if !chain.is_empty() {
            out.push(PathPrimitive::CubicChain { segments: std::mem::take(chain) });
        }
    };
    for run in split_corners(&pts, &ts) {
        match run.points.len() {
            0 | 1 => {}
            2 => {
                flush(&mut chain, &mut out);
                out.push(PathPrimitive::Line { a: run.points[0], b: run.points[1] });
            }
            n => {
                let bounds = window_bounds(n);
                for w in bounds.windows(2) {
                    let (a, b) = (w[0], w[1] + 1);
                    let wp = &run.points[a..b];
                    let wt = renormalize(&run.ts[a..b]);
                    match fit_cubic(wp, &wt) {
                        Ok(c) => chain.push(c),
                        Err(_) => {
                            flush(&mut chain, &mut out);
                            out.extend(wp.windows(2).map(|s| PathPrimitive::Line { a: s[0], b: s[1] }));
                        }
                    }
                }
                flush(&mut chain, &mut out);
            }
        }
    }
    out
}
