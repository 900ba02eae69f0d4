use rand::Rng;

use super::{instance_rng, DotsGt, GroundTruth, ImageRef, TaskInstance, TaskKind};
use crate::geom::PixelPoint;

pub const DOTS_QUESTION: &str = "Connect the numbered dots in increasing order, starting from 1.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DotsError {
    #[error("need at least 2 dots, got {0}")]
    TooFewDots(usize),
    #[error("could not place {0} dots within the retry budget")]
    PlacementFailure(usize),
}

/// Dot radius for an image whose shorter side is `min_side` pixels.
pub fn dot_radius_for(min_side: u32) -> f64 {
    (min_side as f64 * 0.008).max(3.0)
}

const MAX_ATTEMPTS: usize = 20_000;

/// Places `n` numbered dots uniformly at random on whole-pixel centers
/// (so a pixel-resolution frame can reproduce them exactly). Centers are at least
/// `4·r` apart (the contract is `3·r`; the extra room keeps numerals
/// legible) and at least `4·r` from the image border.
pub fn gen_random_dots(n: usize, seed: u64, dims: (u32, u32)) -> Result<TaskInstance, DotsError> {
    if n < 2 {
        return Err(DotsError::TooFewDots(n));
    }
    let (w, h) = dims;
    let r = dot_radius_for(w.min(h));
    let min_d = 4.0 * r;
    let pad = 4.0 * r;
    let mut rng = instance_rng(seed, n as u64);
    let mut points: Vec<PixelPoint> = Vec::with_capacity(n);
    let mut attempts = 0;
    while points.len() < n {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(DotsError::PlacementFailure(n));
        }
        let p = PixelPoint::new(rng.gen_range(pad..w as f64 - pad).round(), rng.gen_range(pad..h as f64 - pad).round());
        if points.iter().all(|q| q.dist(p) >= min_d) {
            points.push(p);
        }
    }
    let label_anchors = label_anchors(&points, r, dims);
    Ok(TaskInstance {
        id: format!("dots_n{n}_s{seed}"),
        kind: TaskKind::ConnectDots,
        image: ImageRef { path: String::new(), width: w, height: h },
        question: DOTS_QUESTION.into(),
        answer: None,
        truth: GroundTruth::Dots(DotsGt { labels: (1..=n as u32).collect(), points, label_anchors, dot_radius: r }),
    })
}

/// For each dot, the one of eight compass offsets (at `2.6·r`) whose anchor
/// is farthest from every other dot and stays inside the image.
pub(crate) fn label_anchors(points: &[PixelPoint], r: f64, dims: (u32, u32)) -> Vec<PixelPoint> {
    let off = 2.6 * r;
    let dirs: Vec<PixelPoint> = (0..8)
        .map(|k| {
            let a = std::f64::consts::FRAC_PI_4 * k as f64 - std::f64::consts::FRAC_PI_4;
            PixelPoint::new(a.cos(), a.sin())
        })
        .collect();
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let score = |c: PixelPoint| {
                let inside = c.x > r && c.y > r && c.x < dims.0 as f64 - r && c.y < dims.1 as f64 - r;
                let clearance =
                    points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| q.dist(c)).fold(f64::INFINITY, f64::min);
                if inside {
                    clearance
                } else {
                    clearance - 1e6
                }
            };
            dirs.iter()
                .map(|d| *p + *d * off)
                .fold((PixelPoint::default(), f64::NEG_INFINITY), |best, c| {
                    let s = score(c);
                    if s > best.1 {
                        (c, s)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}
