use serde::{Deserialize, Serialize};

use crate::geom::{PixelPoint, PixelRect};
use crate::render::pixel_of_clamped;
use crate::stroke::{AnnotationSet, CoordinateFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerReport {
    pub matched: usize,
    pub markers: usize,
    pub objects: usize,
    /// `matched / max(objects, markers)`; 1 when both are zero.
    pub location_acc: f64,
    pub count_correct: bool,
}

/// Maximum-cardinality bipartite matching (Kuhn's augmenting paths).
/// `adj[l]` lists the right vertices left vertex `l` may take. Returns the
/// matched right vertex for each left vertex.
pub fn max_bipartite_matching(adj: &[Vec<usize>], n_right: usize) -> Vec<Option<usize>> {
    fn augment(l: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &r in &adj[l] {
            if seen[r] {
                continue;
            }
            seen[r] = true;
            if owner[r].map_or(true, |o| augment(o, adj, seen, owner)) {
                owner[r] = Some(l);
                return true;
            }
        }
        false
    }
    let mut owner: Vec<Option<usize>> = vec![None; n_right];
    for l in 0..adj.len() {
        let mut seen = vec![false; n_right];
        augment(l, adj, &mut seen, &mut owner);
    }
    let mut out = vec![None; adj.len()];
    for (r, o) in owner.iter().enumerate() {
        if let Some(l) = o {
            out[*l] = Some(r);
        }
    }
    out
}

/// Each marker may claim at most one box that contains it and each box at
/// most one marker; the score uses the largest such assignment.
pub fn marker_accuracy(gt_boxes: &[PixelRect], markers: &[(PixelPoint, String)]) -> MarkerReport {
    let adj: Vec<Vec<usize>> = markers
        .iter()
        .map(|(p, _)| gt_boxes.iter().enumerate().filter(|(_, b)| b.contains(*p)).map(|(i, _)| i).collect())
        .collect();
    let matched = max_bipartite_matching(&adj, gt_boxes.len()).iter().filter(|m| m.is_some()).count();
    let denom = gt_boxes.len().max(markers.len());
    MarkerReport {
        matched,
        markers: markers.len(),
        objects: gt_boxes.len(),
        location_acc: if denom == 0 { 1.0 } else { matched as f64 / denom as f64 },
        count_correct: markers.len() == gt_boxes.len(),
    }
}

/// `(pixel anchor, text)` of every text stroke.
pub fn text_markers(set: &AnnotationSet, frame: &CoordinateFrame, dims: (u32, u32)) -> Vec<(PixelPoint, String)> {
    set.strokes
        .iter()
        .filter_map(|s| {
            let t = s.text.as_ref()?;
            Some((pixel_of_clamped(*s.points.first()?, frame, dims.0, dims.1), t.content.clone()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_score_one() {
        let boxes = vec![PixelRect::new(0.0, 0.0, 10.0, 10.0), PixelRect::new(20.0, 0.0, 30.0, 10.0)];
        let m: Vec<_> = boxes.iter().enumerate().map(|(i, b)| (b.center(), (i + 1).to_string())).collect();
        let r = marker_accuracy(&boxes, &m);
        assert_eq!(r.location_acc, 1.0);
        assert!(r.count_correct);
    }

    #[test]
    fn one_marker_per_object() {
        let boxes = vec![PixelRect::new(0.0, 0.0, 10.0, 10.0), PixelRect::new(20.0, 0.0, 30.0, 10.0)];
        let m = vec![(PixelPoint::new(2.0, 2.0), "1".into()), (PixelPoint::new(8.0, 8.0), "2".into())];
        assert_eq!(marker_accuracy(&boxes, &m).location_acc, 0.5);
    }

    #[test]
    fn augmenting_path_needed() {
        // Greedy would give marker 0 box 0 and strand marker 1.
        let adj = vec![vec![0, 1], vec![0]];
        let m = max_bipartite_matching(&adj, 2);
        assert_eq!(m, vec![Some(1), Some(0)]);
    }

    #[test]
    fn empty_is_perfect() {
        let r = marker_accuracy(&[], &[]);
        assert_eq!((r.location_acc, r.count_correct), (1.0, true));
    }
}
