use serde::{Deserialize, Serialize};

use crate::fit::stroke_to_primitives;
use crate::forge::SizeBucket;
use crate::geom::{PixelPoint, PixelRect};
use crate::render::pixel_of_clamped;
use crate::stroke::{AnnotationSet, CoordinateFrame};

/// IoU at or above which a prediction may match a ground truth.
pub const IOU_THRESHOLD: f64 = 0.5;

/// Tight axis-aligned bounds of an ellipse with semi-axes `rx`, `ry`
/// rotated by `rotation` radians about `center`.
pub fn oval_to_bbox(center: PixelPoint, rx: f64, ry: f64, rotation: f64) -> PixelRect {
    let (s, c) = rotation.sin_cos();
    let hw = (rx * rx * c * c + ry * ry * s * s).sqrt();
    let hh = (rx * rx * s * s + ry * ry * c * c).sqrt();
    PixelRect::from_center(center, hw, hh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// `None` when no ground truth falls in the slice.
    pub all: Option<f64>,
    pub small: Option<f64>,
    pub medium: Option<f64>,
    pub large: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBoxes {
    pub name: String,
    pub boxes: Vec<PixelRect>,
}

/// Area range a slice evaluates; ground truths outside it are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AreaRange {
    All,
    Bucket(SizeBucket),
}

impl AreaRange {
    fn admits(self, area: f64) -> bool {
        match self {
            AreaRange::All => true,
            AreaRange::Bucket(b) => SizeBucket::of_area(area) == b,
        }
    }
}

/// Match outcome of each prediction in rank order: `Some(true)` true
/// positive, `Some(false)` false positive, `None` ignored.
pub fn match_predictions(preds: &[PixelRect], gts: &[PixelRect], range: AreaRange) -> Vec<Option<bool>> {
    let ignored: Vec<bool> = gts.iter().map(|g| !range.admits(g.area())).collect();
    let mut taken = vec![false; gts.len()];
    preds
        .iter()
        .map(|p| {
            // Prefer the best counted gt; fall back to the best ignored one.
            let best = |want_ignored: bool| {
                let mut best: Option<(usize, f64)> = None;
                for (j, g) in gts.iter().enumerate() {
                    if taken[j] || ignored[j] != want_ignored {
                        continue;
                    }
                    let iou = p.iou(g);
                    if iou >= IOU_THRESHOLD && best.map_or(true, |(_, b)| iou > b) {
                        best = Some((j, iou));
                    }
                }
                best
            };
            if let Some((j, _)) = best(false) {
                taken[j] = true;
                Some(true)
            } else if let Some((j, _)) = best(true) {
                taken[j] = true;
                None
            } else if range.admits(p.area()) {
                Some(false)
            } else {
                None
            }
        })
        .collect()
}

/// All-point interpolated area under the precision/recall curve for a
/// ranked list of outcomes against `n_gt` counted ground truths.
pub fn average_precision(outcomes: &[Option<bool>], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut recall = vec![];
    let mut precision = vec![];
    for o in outcomes.iter().flatten() {
        if *o {
            tp += 1
        } else {
            fp += 1
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_r) * p;
        prev_r = *r;
    }
    ap
}

/// AP at IoU 0.5 averaged over classes that have ground truth in the slice.
/// Predictions are ranked in emission order (there are no confidences).
pub fn ap50_in(preds: &[ClassBoxes], gts: &[ClassBoxes], range: AreaRange) -> Option<f64> {
    let mut per_class = vec![];
    for g in gts {
        let n_gt = g.boxes.iter().filter(|b| range.admits(b.area())).count();
        if n_gt == 0 {
            continue;
        }
        let p: Vec<PixelRect> = preds.iter().filter(|c| c.name == g.name).flat_map(|c| c.boxes.iter().copied()).collect();
        per_class.push(average_precision(&match_predictions(&p, &g.boxes, range), n_gt));
    }
    if per_class.is_empty() {
        None
    } else {
        Some(per_class.iter().sum::<f64>() / per_class.len() as f64)
    }
}

pub fn ap50(preds: &[ClassBoxes], gts: &[ClassBoxes]) -> ApReport {
    ApReport {
        all: ap50_in(preds, gts, AreaRange::All),
        small: ap50_in(preds, gts, AreaRange::Bucket(SizeBucket::Small)),
        medium: ap50_in(preds, gts, AreaRange::Bucket(SizeBucket::Medium)),
        large: ap50_in(preds, gts, AreaRange::Bucket(SizeBucket::Large)),
    }
}

/// Reads shape predictions out of an annotation. Each geometry stroke is an
/// enclosing oval whose box is the tight bounds of its fitted path. Its class
/// is the text of a label stroke placed inside that box, else the set's
/// concept, else `default_class`.
pub fn shape_predictions(set: &AnnotationSet, frame: &CoordinateFrame, dims: (u32, u32), default_class: &str) -> Vec<ClassBoxes> {
    let labels: Vec<(PixelPoint, &str)> = set
        .strokes
        .iter()
        .filter_map(|s| Some((pixel_of_clamped(*s.points.first()?, frame, dims.0, dims.1), s.text.as_ref()?.content.as_str())))
        .collect();
    let fallback = set.concept.as_deref().unwrap_or(default_class);
    let mut out: Vec<ClassBoxes> = vec![];
    for s in set.strokes.iter().filter(|s| !s.is_text()) {
        let prims = stroke_to_primitives(s, frame, dims.0, dims.1);
        let Some(bb) = prims.iter().map(|p| p.bounds()).reduce(|a, b| a.union(&b)) else { continue };
        let name = labels.iter().find(|(p, _)| bb.contains(*p)).map(|(_, t)| t.trim()).unwrap_or(fallback);
        match out.iter_mut().find(|c| c.name == name) {
            Some(c) => c.boxes.push(bb),
            None => out.push(ClassBoxes { name: name.to_string(), boxes: vec![bb] }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cls(name: &str, boxes: Vec<PixelRect>) -> ClassBoxes {
        ClassBoxes { name: name.into(), boxes }
    }

    #[test]
    fn oval_examples() {
        let r = oval_to_bbox(PixelPoint::new(10.0, 10.0), 5.0, 5.0, 0.3);
        assert!((r.x0 - 5.0).abs() < 1e-12 && (r.y1 - 15.0).abs() < 1e-12);
        let r = oval_to_bbox(PixelPoint::new(0.0, 0.0), 4.0, 2.0, std::f64::consts::FRAC_PI_4);
        assert!((r.width() / 2.0 - 10f64.sqrt()).abs() < 1e-12);
        assert!((r.height() / 2.0 - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_box_is_perfect() {
        let b = PixelRect::new(0.0, 0.0, 50.0, 50.0);
        let r = ap50(&[cls("a", vec![b])], &[cls("a", vec![b])]);
        assert_eq!(r.all, Some(1.0));
        assert_eq!(r.medium, Some(1.0));
        assert_eq!(r.small, None);
    }

    #[test]
    fn third_iou_misses() {
        let r = ap50(&[cls("a", vec![PixelRect::new(5.0, 0.0, 15.0, 10.0)])], &[cls("a", vec![PixelRect::new(0.0, 0.0, 10.0, 10.0)])]);
        assert_eq!(r.all, Some(0.0));
    }

    #[test]
    fn rank_order_matters() {
        let g = vec![PixelRect::new(0.0, 0.0, 10.0, 10.0)];
        let hit = PixelRect::new(0.0, 0.0, 10.0, 10.0);
        let miss = PixelRect::new(50.0, 50.0, 60.0, 60.0);
        let a = ap50_in(&[cls("a", vec![hit, miss])], &[cls("a", g.clone())], AreaRange::All).unwrap();
        let b = ap50_in(&[cls("a", vec![miss, hit])], &[cls("a", g)], AreaRange::All).unwrap();
        assert_eq!(a, 1.0);
        assert_eq!(b, 0.5);
    }
}
