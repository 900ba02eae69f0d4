use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::geom::PixelPoint;
use crate::render::pixel_of_clamped;
use crate::stroke::{AnnotationSet, CoordinateFrame};

/// Root mean square, over ground-truth points, of the distance to the
/// nearest predicted point. Several gt points may share one prediction.
pub fn rmse_closest(gt: &[PixelPoint], pred: &[PixelPoint]) -> Result<f64, MetricError> {
    if gt.is_empty() {
        return Err(MetricError::EmptyTruth);
    }
    if pred.is_empty() {
        return Err(MetricError::EmptyPrediction);
    }
    let sum: f64 = gt
        .iter()
        .map(|g| pred.iter().map(|p| g.dist2(*p)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok((sum / gt.len() as f64).sqrt())
}

/// Mean squared endpoint distance between segment `s` and the pair
/// `(a, b)`, minimized over the two orientations of the segment.
pub fn segment_mse(s: (PixelPoint, PixelPoint), a: PixelPoint, b: PixelPoint) -> f64 {
    let fwd = (s.0.dist2(a) + s.1.dist2(b)) / 2.0;
    let rev = (s.0.dist2(b) + s.1.dist2(a)) / 2.0;
    fwd.min(rev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    /// Misordered plus missing segments.
    pub errors: usize,
    pub misordered: usize,
    pub missing: usize,
    /// Segments beyond the `n − 1` expected ones; reported, not scored.
    pub extra: usize,
    /// `errors / (n − 1)`.
    pub rate: f64,
}

/// Predicted segment `i` is an ordering error when some other consecutive
/// gt pair `(j, j+1)` has strictly lower [`segment_mse`] than its expected
/// pair `(i, i+1)`. Expected segments that were never drawn count as errors.
pub fn ordering_errors(gt: &[PixelPoint], segments: &[(PixelPoint, PixelPoint)]) -> Result<OrderingReport, MetricError> {
    if gt.len() < 2 {
        return Err(MetricError::EmptyTruth);
    }
    let expected = gt.len() - 1;
    let mut misordered = 0;
    for (i, s) in segments.iter().take(expected).enumerate() {
        let own = segment_mse(*s, gt[i], gt[i + 1]);
        if (0..expected).any(|j| j != i && segment_mse(*s, gt[j], gt[j + 1]) < own) {
            misordered += 1;
        }
    }
    let missing = expected.saturating_sub(segments.len());
    let errors = misordered + missing;
    Ok(OrderingReport {
        errors,
        misordered,
        missing,
        extra: segments.len().saturating_sub(expected),
        rate: errors as f64 / expected as f64,
    })
}

/// Pixel positions of every sample of every geometry stroke, with repeated
/// corner samples collapsed.
pub fn stroke_vertices(set: &AnnotationSet, frame: &CoordinateFrame, dims: (u32, u32)) -> Vec<Vec<PixelPoint>> {
    set.strokes
        .iter()
        .filter(|s| !s.is_text())
        .map(|s| {
            let mut v: Vec<PixelPoint> = Vec::with_capacity(s.points.len());
            for r in &s.points {
                let p = pixel_of_clamped(*r, frame, dims.0, dims.1);
                if v.last() != Some(&p) {
                    v.push(p);
                }
            }
            v
        })
        .collect()
}

/// Consecutive-sample segments of every geometry stroke, in emission order.
pub fn stroke_segments(set: &AnnotationSet, frame: &CoordinateFrame, dims: (u32, u32)) -> Vec<(PixelPoint, PixelPoint)> {
    stroke_vertices(set, frame, dims).iter().flat_map(|v| v.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> PixelPoint {
        PixelPoint::new(x, y)
    }

    #[test]
    fn rmse_examples() {
        let gt = vec![p(0.0, 0.0), p(5.0, 5.0)];
        assert_eq!(rmse_closest(&gt, &gt).unwrap(), 0.0);
        assert_eq!(rmse_closest(&[p(0.0, 0.0)], &[p(3.0, 4.0), p(100.0, 100.0)]).unwrap(), 5.0);
        assert_eq!(rmse_closest(&gt, &[]), Err(MetricError::EmptyPrediction));
    }

    #[test]
    fn in_order_has_no_errors() {
        let gt = vec![p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)];
        let segs: Vec<_> = gt.windows(2).map(|w| (w[0], w[1])).collect();
        assert_eq!(ordering_errors(&gt, &segs).unwrap().errors, 0);
    }

    #[test]
    fn missing_segments() {
        let gt = vec![p(0.0, 0.0), p(10.0, 0.0), p(10.0, 10.0), p(0.0, 10.0)];
        let r = ordering_errors(&gt, &[(gt[0], gt[1])]).unwrap();
        assert_eq!((r.errors, r.missing), (2, 2));
    }
}
