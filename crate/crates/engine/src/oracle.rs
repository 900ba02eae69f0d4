//! Ground-truth annotators: turn a task's truth payload into the strokes and
//! answer a perfect model would emit, and script a mock model with them.

use strokelab_core::forge::{GroundTruth, MazeGt, PartRegion, TaskInstance};
use strokelab_core::geom::{PixelPoint, PixelRect};
use strokelab_core::prompting::TaskPrompt;
use strokelab_core::render::raster::point_in_polygon;
use strokelab_core::render::{grid_ref_of, pixel_of_clamped};
use strokelab_core::stroke::{serialize_annotation, AnnotationSet, CoordinateFrame, Dialect, GridRef, SizeUnit, Stroke, TextStyle};

use crate::gateway::MockModel;
use crate::session::{final_response, stroke_response, EMPTY_RESPONSE};

/// Upper bound on vertices used to trace a ball trajectory.
const TRAJECTORY_VERTICES: usize = 40;

/// The task prompt a task instance is asked with.
pub fn task_prompt(inst: &TaskInstance) -> TaskPrompt {
    match &inst.truth {
        GroundTruth::Count { object, .. } => TaskPrompt::Counting { object: object.clone() },
        GroundTruth::Label { concept, parts } => {
            TaskPrompt::Labeling { concept: concept.clone(), labels_hint: parts.iter().map(|p| p.name.clone()).collect() }
        }
        _ => TaskPrompt::FreeQuestion { text: inst.question.clone() },
    }
}

struct Tracer<'a> {
    frame: &'a CoordinateFrame,
    dims: (u32, u32),
}

impl Tracer<'_> {
    fn r(&self, p: PixelPoint) -> GridRef {
        grid_ref_of(p, self.frame, self.dims.0, self.dims.1)
    }

    fn refs(&self, pts: &[PixelPoint]) -> Vec<GridRef> {
        let mut out: Vec<GridRef> = vec![];
        for p in pts {
            let r = self.r(*p);
            if out.last() != Some(&r) {
                out.push(r);
            }
        }
        out
    }

    fn label(&self, id: String, at: PixelPoint, text: &str) -> Stroke {
        Stroke::label(id, self.r(at), text, TextStyle { size: 16.0, unit: SizeUnit::Pixels, color: "black".into() })
    }
}

fn maze_centers(gt: &MazeGt, dims: (u32, u32)) -> Vec<PixelPoint> {
    let margin = strokelab_core::forge::draw::MAZE_MARGIN;
    let cell = (dims.0.min(dims.1) as f64 - 2.0 * margin) / gt.rows.max(gt.cols) as f64;
    let center = |(r, c): (i32, i32)| PixelPoint::new(margin + (c as f64 + 0.5) * cell, margin + (r as f64 + 0.5) * cell);
    let mut at = (gt.start.0 as i32, gt.start.1 as i32);
    let mut out = vec![center(at)];
    for d in &gt.path {
        let (dr, dc) = d.delta();
        at = ((at.0 + dr).clamp(0, gt.rows as i32 - 1), (at.1 + dc).clamp(0, gt.cols as i32 - 1));
        out.push(center(at));
    }
    out
}

fn downsample(pts: &[PixelPoint], max: usize) -> Vec<PixelPoint> {
    if pts.len() <= max {
        return pts.to_vec();
    }
    let step = (pts.len() - 1) as f64 / (max - 1) as f64;
    (0..max).map(|i| pts[((i as f64 * step).round() as usize).min(pts.len() - 1)]).collect()
}

/// A point whose token round trip lands inside the polygon, as close to the
/// vertex centroid as possible.
fn interior_anchor(part: &PartRegion, tr: &Tracer<'_>) -> Option<PixelPoint> {
    let n = part.polygon.len() as f64;
    if n == 0.0 {
        return None;
    }
    let c = part.polygon.iter().fold(PixelPoint::new(0.0, 0.0), |a, p| PixelPoint::new(a.x + p.x / n, a.y + p.y / n));
    let bb = PixelRect::bounding(part.polygon.iter().copied())?;
    let round_trip = |p: PixelPoint| pixel_of_clamped(tr.r(p), tr.frame, tr.dims.0, tr.dims.1);
    let ok = |p: PixelPoint| point_in_polygon(p, &part.polygon) && point_in_polygon(round_trip(p), &part.polygon);
    if ok(c) {
        return Some(c);
    }
    let mut best: Option<(f64, PixelPoint)> = None;
    let (x0, y0) = (bb.x0.floor() as i64, bb.y0.floor() as i64);
    let (x1, y1) = (bb.x1.ceil() as i64, bb.y1.ceil() as i64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = PixelPoint::new(x as f64 + 0.5, y as f64 + 0.5);
            let d = p.dist2(c);
            if best.map_or(true, |(bd, _)| d < bd) && ok(p) {
                best = Some((d, p));
            }
        }
    }
    best.map(|(_, p)| p)
}

/// The strokes a perfect annotator draws for `inst`, one entry per stepwise
/// turn. `stepwise` splits connect-the-dots into one segment per stroke.
pub fn oracle_strokes(inst: &TaskInstance, frame: &CoordinateFrame, stepwise: bool) -> Vec<Stroke> {
    let dims = (inst.image.width, inst.image.height);
    let tr = Tracer { frame, dims };
    match &inst.truth {
        GroundTruth::Dots(gt) => {
            let refs: Vec<GridRef> = gt.points.iter().map(|p| tr.r(*p)).collect();
            if stepwise && refs.len() >= 2 {
                refs.windows(2).enumerate().map(|(i, w)| Stroke::polyline(format!("seg_{}", i + 1), w)).collect()
            } else {
                vec![Stroke::polyline("path", &refs)]
            }
        }
        GroundTruth::Maze(gt) => vec![Stroke::polyline("route", &tr.refs(&maze_centers(gt, dims)))],
        GroundTruth::Ball(gt) => vec![Stroke::polyline("trajectory", &tr.refs(&downsample(&gt.trajectory, TRAJECTORY_VERTICES)))],
        GroundTruth::Count { boxes, .. } => {
            boxes.iter().enumerate().map(|(i, b)| tr.label(format!("count_{}", i + 1), b.center(), &(i + 1).to_string())).collect()
        }
        GroundTruth::Shapes { classes } => {
            let mut out = vec![];
            for c in classes {
                for b in &c.boxes {
                    let k = out.len() / 2 + 1;
                    let corners = [
                        PixelPoint::new(b.x0, b.y0),
                        PixelPoint::new(b.x1, b.y0),
                        PixelPoint::new(b.x1, b.y1),
                        PixelPoint::new(b.x0, b.y1),
                        PixelPoint::new(b.x0, b.y0),
                    ];
                    let refs: Vec<GridRef> = corners.iter().map(|p| tr.r(*p)).collect();
                    out.push(Stroke::polyline(format!("shape_{k}"), &refs));
                    out.push(tr.label(format!("shape_{k}_label"), b.center(), &c.name));
                }
            }
            out
        }
        GroundTruth::Label { parts, .. } => parts
            .iter()
            .enumerate()
            .filter_map(|(i, p)| Some(tr.label(format!("label_{}", i + 1), interior_anchor(p, &tr)?, &p.name)))
            .collect(),
        GroundTruth::Free => vec![],
    }
}

/// Complete oracle annotation: the single-turn strokes plus the answer.
pub fn oracle_annotation(inst: &TaskInstance, frame: &CoordinateFrame) -> AnnotationSet {
    let concept = match &inst.truth {
        GroundTruth::Label { concept, .. } => Some(concept.clone()),
        _ => None,
    };
    AnnotationSet { concept, strokes: oracle_strokes(inst, frame, false), final_answer: inst.answer.clone(), final_answer_early: false }
}

/// The one response a perfect single-turn model gives.
pub fn oracle_single_script(inst: &TaskInstance, frame: &CoordinateFrame) -> Vec<String> {
    vec![serialize_annotation(&oracle_annotation(inst, frame), Dialect::XmlStyle)]
}

/// Stepwise responses: one stroke per turn, an empty turn, then the answer.
pub fn oracle_stepwise_script(inst: &TaskInstance, frame: &CoordinateFrame) -> Vec<String> {
    let mut out: Vec<String> = oracle_strokes(inst, frame, true).iter().map(stroke_response).collect();
    out.push(EMPTY_RESPONSE.to_owned());
    out.push(final_response(inst.answer.as_deref().unwrap_or("")));
    out
}

/// A mock model scripted with the oracle responses for `inst`.
pub fn oracle_model(inst: &TaskInstance, frame: &CoordinateFrame, stepwise: bool) -> MockModel {
    let script = if stepwise { oracle_stepwise_script(inst, frame) } else { oracle_single_script(inst, frame) };
    MockModel::new(script).named("oracle")
}
