use rand::Rng;

use super::dots::{dot_radius_for, DOTS_QUESTION};
use super::{instance_rng, DotsGt, GroundTruth, ImageRef, TaskInstance, TaskKind};
use crate::geom::{point_segment_distance, segments_intersect, PixelPoint, PixelRect};

pub const OUTLINE_DOTS: usize = 30;
/// Simplification tolerance as a fraction of the bounding-box diagonal.
pub const DP_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OutlineError {
    #[error("no closed contour with positive area")]
    DegenerateContour,
    #[error("simplified contour intersects itself")]
    SelfIntersecting,
}

/// Douglas–Peucker on an open polyline; keeps both endpoints.
pub fn douglas_peucker(pts: &[PixelPoint], tol: f64) -> Vec<PixelPoint> {
    if pts.len() < 3 {
        return pts.to_vec();
    }
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[pts.len() - 1] = true;
    let mut stack = vec![(0usize, pts.len() - 1)];
    while let Some((a, b)) = stack.pop() {
        let (mut best, mut best_d) = (a, -1.0);
        for i in a + 1..b {
            let d = point_segment_distance(pts[i], pts[a], pts[b]);
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        if best_d > tol {
            keep[best] = true;
            stack.push((a, best));
            stack.push((best, b));
        }
    }
    pts.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}

/// Douglas–Peucker on a closed ring (no repeated closing vertex): the ring
/// is cut at vertex 0 and the vertex farthest from it, and both halves are
/// simplified independently.
pub fn simplify_closed(ring: &[PixelPoint], tol: f64) -> Vec<PixelPoint> {
    if ring.len() < 4 {
        return ring.to_vec();
    }
    let far = (1..ring.len()).max_by(|&i, &j| ring[0].dist2(ring[i]).total_cmp(&ring[0].dist2(ring[j]))).expect("non-empty");
    let first = douglas_peucker(&ring[..=far], tol);
    let mut second_src = ring[far..].to_vec();
    second_src.push(ring[0]);
    let second = douglas_peucker(&second_src, tol);
    let mut out = first;
    out.extend_from_slice(&second[1..second.len() - 1]);
    out
}

pub fn signed_area(ring: &[PixelPoint]) -> f64 {
    let n = ring.len();
    (0..n).map(|i| ring[i].cross(ring[(i + 1) % n])).sum::<f64>() / 2.0
}

pub fn perimeter(ring: &[PixelPoint]) -> f64 {
    let n = ring.len();
    (0..n).map(|i| ring[i].dist(ring[(i + 1) % n])).sum()
}

/// Whether any two non-adjacent edges of the ring touch.
pub fn ring_self_intersects(ring: &[PixelPoint]) -> bool {
    let n = ring.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// `count` points at equal arc-length spacing around the ring, starting at
/// vertex 0. Also returns the unit tangent at each sample.
pub fn resample_closed(ring: &[PixelPoint], count: usize) -> Vec<(PixelPoint, PixelPoint)> {
    let n = ring.len();
    let total = perimeter(ring);
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let (mut edge, mut edge_start) = (0usize, 0.0);
    for k in 0..count {
        let s = k as f64 * step;
        loop {
            let len = ring[edge].dist(ring[(edge + 1) % n]);
            if s <= edge_start + len || edge == n - 1 {
                let (a, b) = (ring[edge], ring[(edge + 1) % n]);
                let u = if len > 0.0 { ((s - edge_start) / len).clamp(0.0, 1.0) } else { 0.0 };
                let t = if len > 0.0 { (b - a) * (1.0 / len) } else { PixelPoint::new(1.0, 0.0) };
                out.push((a.lerp(b, u), t));
                break;
            }
            edge_start += len;
            edge += 1;
        }
    }
    out
}

fn dedup_ring(c: &[PixelPoint]) -> Vec<PixelPoint> {
    let mut ring: Vec<PixelPoint> = Vec::with_capacity(c.len());
    for p in c {
        if ring.last().map_or(true, |q| q.dist2(*p) > 0.0) {
            ring.push(*p);
        }
    }
    while ring.len() > 1 && ring[0].dist2(*ring.last().expect("non-empty")) == 0.0 {
        ring.pop();
    }
    ring
}

/// Simplified, unit-square-normalized main contour with positive signed
/// area, rotated so that it starts at a seed-chosen vertex.
pub fn prepare_contour(contours: &[Vec<PixelPoint>], seed: u64) -> Result<Vec<PixelPoint>, OutlineError> {
    let main = contours
        .iter()
        .map(|c| dedup_ring(c))
        .filter(|r| r.len() >= 3)
        .max_by(|a, b| perimeter(a).total_cmp(&perimeter(b)))
        .ok_or(OutlineError::DegenerateContour)?;
    let bb = PixelRect::bounding(main.iter().copied()).expect("non-empty");
    let diag = (bb.width().powi(2) + bb.height().powi(2)).sqrt();
    let mut ring = simplify_closed(&main, DP_TOLERANCE * diag);
    if ring.len() < 3 || signed_area(&ring).abs() <= 1e-12 * diag * diag {
        return Err(OutlineError::DegenerateContour);
    }
    if ring_self_intersects(&ring) {
        return Err(OutlineError::SelfIntersecting);
    }
    if signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    let side = bb.width().max(bb.height());
    for p in &mut ring {
        *p = PixelPoint::new((p.x - bb.x0) / side, (p.y - bb.y0) / side);
    }
    let start = instance_rng(seed, 0).gen_range(0..ring.len());
    ring.rotate_left(start);
    Ok(ring)
}

/// Connect-the-dots puzzle from a silhouette: the longest contour is
/// simplified, normalized to the unit square and resampled to 30 evenly
/// spaced dots, numbered in ring order with labels pushed outward.
pub fn gen_outline_dots(contours: &[Vec<PixelPoint>], seed: u64, dims: (u32, u32)) -> Result<TaskInstance, OutlineError> {
    let ring = prepare_contour(contours, seed)?;
    let (w, h) = dims;
    let side = w.min(h) as f64;
    let margin = 0.12 * side;
    let scale = side - 2.0 * margin;
    let off = PixelPoint::new((w as f64 - side) / 2.0 + margin, (h as f64 - side) / 2.0 + margin);
    let r = dot_radius_for(w.min(h));
    let samples = resample_closed(&ring, OUTLINE_DOTS);
    let points: Vec<PixelPoint> = samples.iter().map(|(p, _)| off + *p * scale).collect();
    // Positive signed area: the outward normal is the tangent turned by −90°.
    let label_anchors = samples
        .iter()
        .zip(&points)
        .map(|((_, t), p)| *p + PixelPoint::new(t.y, -t.x) * (2.6 * r))
        .collect();
    Ok(TaskInstance {
        id: format!("outline_s{seed}"),
        kind: TaskKind::ConnectDots,
        image: ImageRef { path: String::new(), width: w, height: h },
        question: DOTS_QUESTION.into(),
        answer: None,
        truth: GroundTruth::Dots(DotsGt {
            labels: (1..=OUTLINE_DOTS as u32).collect(),
            points,
            label_anchors,
            dot_radius: r,
        }),
    })
}

/// Built-in silhouettes for dataset generation without external SVGs.
pub fn builtin_contours() -> Vec<(&'static str, Vec<PixelPoint>)> {
    let circle = |n: usize, f: &dyn Fn(f64) -> (f64, f64)| -> Vec<PixelPoint> {
        (0..n)
            .map(|i| {
                let (x, y) = f(std::f64::consts::TAU * i as f64 / n as f64);
                PixelPoint::new(x, y)
            })
            .collect()
    };
    let p = PixelPoint::new;
    vec![
        ("circle", circle(360, &|a| (a.cos(), a.sin()))),
        ("ellipse", circle(360, &|a| (1.6 * a.cos(), a.sin()))),
        ("square", vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]),
        ("house", vec![p(0.0, 1.0), p(0.0, 0.45), p(0.5, 0.0), p(1.0, 0.45), p(1.0, 1.0)]),
        ("star", (0..10).map(|i| {
            let a = std::f64::consts::TAU * i as f64 / 10.0 - std::f64::consts::FRAC_PI_2;
            let r = if i % 2 == 0 { 1.0 } else { 0.45 };
            p(r * a.cos(), r * a.sin())
        }).collect()),
        ("heart", circle(400, &|t| {
            let x = 16.0 * t.sin().powi(3);
            let y = 13.0 * t.cos() - 5.0 * (2.0 * t).cos() - 2.0 * (3.0 * t).cos() - (4.0 * t).cos();
            (x, -y)
        })),
        ("blob", circle(300, &|a| {
            let r = 1.0 + 0.25 * (3.0 * a).sin() + 0.1 * (5.0 * a).cos();
            (r * a.cos(), r * a.sin())
        })),
        ("arrow", vec![p(0.0, 0.35), p(0.6, 0.35), p(0.6, 0.1), p(1.0, 0.5), p(0.6, 0.9), p(0.6, 0.65), p(0.0, 0.65)]),
    ]
}
