use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::forge::PartRegion;
use crate::geom::PixelPoint;
use crate::render::Mask;

/// Dilation radii (pixels) reported by default.
pub const DILATION_RADII: [f64; 6] = [0.0, 3.0, 5.0, 7.0, 10.0, 15.0];

/// Squared Euclidean distance from every pixel to the nearest set pixel of
/// `mask` (pixel-center to pixel-center), by the separable lower-envelope
/// transform. Pixels are `f64::INFINITY` when the mask is empty.
pub fn squared_distance_field(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.dims().0 as usize, mask.dims().1 as usize);
    let mut f = vec![f64::INFINITY; w * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x as u32, y as u32) {
                f[y * w + x] = 0.0;
            }
        }
    }
    let mut line = vec![0.0; w.max(h)];
    let mut out = vec![0.0; w.max(h)];
    for x in 0..w {
        for y in 0..h {
            line[y] = f[y * w + x];
        }
        lower_envelope(&line[..h], &mut out[..h]);
        for y in 0..h {
            f[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        line[..w].copy_from_slice(&f[y * w..(y + 1) * w]);
        lower_envelope(&line[..w], &mut out[..w]);
        f[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    f
}

/// One-dimensional transform `d(q) = min_p (q − p)² + f(p)`.
fn lower_envelope(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let finite: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
    if finite.is_empty() {
        d.fill(f64::INFINITY);
        return;
    }
    let mut v: Vec<usize> = Vec::with_capacity(finite.len());
    let mut z: Vec<f64> = Vec::with_capacity(finite.len() + 1);
    let inter = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
    for &q in &finite {
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = inter(q, p);
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        *out = dq * dq + f[v[k]];
    }
}

/// A part region rasterized at image resolution with its distance field.
#[derive(Debug, Clone)]
pub struct PartField {
    pub name: String,
    mask: Mask,
    dist2: Vec<f64>,
}

impl PartField {
    pub fn new(part: &PartRegion, dims: (u32, u32)) -> Self {
        let mut mask = Mask::new(dims.0, dims.1);
        mask.add_polygon(&part.polygon);
        let dist2 = squared_distance_field(&mask);
        Self { name: part.name.clone(), mask, dist2 }
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Squared distance from the pixel holding `anchor` to the region.
    pub fn distance2(&self, anchor: PixelPoint) -> f64 {
        let (w, h) = self.mask.dims();
        let (ax, ay) = (anchor.x.floor(), anchor.y.floor());
        if ax >= 0.0 && ay >= 0.0 && ax < w as f64 && ay < h as f64 {
            return self.dist2[ay as usize * w as usize + ax as usize];
        }
        // Off-image anchors fall back to a direct scan.
        let mut best = f64::INFINITY;
        for y in 0..h {
            for x in 0..w {
                if self.mask.get(x, y) {
                    best = best.min((x as f64 - ax).powi(2) + (y as f64 - ay).powi(2));
                }
            }
        }
        best
    }

    /// Whether `anchor` lies in the region dilated by `r` pixels.
    pub fn within(&self, anchor: PixelPoint, r: f64) -> bool {
        self.distance2(anchor) <= r * r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationReport {
    pub radius: f64,
    pub required: usize,
    pub correct: usize,
    pub missing_label: usize,
    pub wrong_position: usize,
    /// Emitted names that are not among the parts.
    pub unknown_names: Vec<String>,
    pub accuracy: f64,
    pub missing_label_rate: f64,
    pub wrong_position_rate: f64,
}

fn normalize_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Scores labels against precomputed part fields. A required part is
/// correct when any label carrying its name sits inside the part dilated by
/// `r`; with no such label at all it is a missing label, otherwise a wrong
/// position. Names are compared case- and whitespace-insensitively.
pub fn dilation_accuracy_fields(labels: &[(PixelPoint, String)], parts: &[PartField], r: f64) -> DilationReport {
    let names: BTreeSet<String> = parts.iter().map(|p| normalize_name(&p.name)).collect();
    let mut unknown: BTreeSet<String> = BTreeSet::new();
    for (_, n) in labels {
        if !names.contains(&normalize_name(n)) {
            unknown.insert(n.clone());
        }
    }
    let (mut correct, mut missing, mut wrong) = (0, 0, 0);
    for part in parts {
        let key = normalize_name(&part.name);
        let mine: Vec<PixelPoint> = labels.iter().filter(|(_, n)| normalize_name(n) == key).map(|(p, _)| *p).collect();
        if mine.is_empty() {
            missing += 1;
        } else if mine.iter().any(|a| part.within(*a, r)) {
            correct += 1;
        } else {
            wrong += 1;
        }
    }
    let req = parts.len();
    let rate = |k: usize| if req == 0 { 0.0 } else { k as f64 / req as f64 };
    DilationReport {
        radius: r,
        required: req,
        correct,
        missing_label: missing,
        wrong_position: wrong,
        unknown_names: unknown.into_iter().collect(),
        accuracy: if req == 0 { 1.0 } else { rate(correct) },
        missing_label_rate: rate(missing),
        wrong_position_rate: rate(wrong),
    }
}

/// Rasterizes `parts` at `dims` and scores the labels at radius `r`.
pub fn dilation_accuracy(labels: &[(PixelPoint, String)], parts: &[PartRegion], dims: (u32, u32), r: f64) -> DilationReport {
    let fields: Vec<PartField> = parts.iter().map(|p| PartField::new(p, dims)).collect();
    dilation_accuracy_fields(labels, &fields, r)
}
