use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AnnotationSet, CoordinateFrame};
use crate::color::parse_color;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Col,
    Row,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyStroke { stroke: String },
    CountMismatch { stroke: String, points: usize, t_values: usize },
    OutOfRange { stroke: String, index: usize, axis: Axis, value: i32, max: u32 },
    TOutOfUnit { stroke: String, index: usize, value: f64 },
    TDecreasing { stroke: String, index: usize },
    TEndpoints { stroke: String },
    DuplicateId { stroke: String },
    MultiPointText { stroke: String, points: usize },
    BadTextSize { stroke: String },
    BadColor { stroke: String, color: String },
    FinalAnswerEarly,
}

impl Violation {
    pub fn stroke_id(&self) -> Option<&str> {
        use Violation::*;
        match self {
            EmptyStroke { stroke }
            | CountMismatch { stroke, .. }
            | OutOfRange { stroke, .. }
            | TOutOfUnit { stroke, .. }
            | TDecreasing { stroke, .. }
            | TEndpoints { stroke }
            | DuplicateId { stroke }
            | MultiPointText { stroke, .. }
            | BadTextSize { stroke }
            | BadColor { stroke, .. } => Some(stroke),
            FinalAnswerEarly => None,
        }
    }

    /// Out-of-range points still render (clamped); everything else makes the
    /// set unrenderable.
    pub fn blocks_render(&self) -> bool {
        !matches!(self, Violation::OutOfRange { .. } | Violation::FinalAnswerEarly)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyStroke { stroke } => write!(f, "{stroke}: stroke has no points"),
            CountMismatch { stroke, points, t_values } => {
                write!(f, "{stroke}: {points} points but {t_values} t values")
            }
            OutOfRange { stroke, index, axis, value, max } => {
                write!(f, "{stroke}: point {index} {axis:?} {value} outside 0..={max}")
            }
            TOutOfUnit { stroke, index, value } => write!(f, "{stroke}: t[{index}] = {value} not in [0,1]"),
            TDecreasing { stroke, index } => write!(f, "{stroke}: t decreases at index {index}"),
            TEndpoints { stroke } => write!(f, "{stroke}: t values must start at 0 and end at 1"),
            DuplicateId { stroke } => write!(f, "{stroke}: duplicate stroke id"),
            MultiPointText { stroke, points } => write!(f, "{stroke}: text stroke has {points} points"),
            BadTextSize { stroke } => write!(f, "{stroke}: text size must be positive"),
            BadColor { stroke, color } => write!(f, "{stroke}: unknown color {color:?}"),
            FinalAnswerEarly => write!(f, "<final_answer> appears before </strokes>"),
        }
    }
}

/// Every invariant violation in `set` relative to `frame`; empty iff valid.
pub fn validate(set: &AnnotationSet, frame: &CoordinateFrame) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for s in &set.strokes {
        let id = || s.id.clone();
        if !seen.insert(s.id.as_str()) {
            out.push(Violation::DuplicateId { stroke: id() });
        }
        if s.points.is_empty() {
            out.push(Violation::EmptyStroke { stroke: id() });
        }
        if s.points.len() != s.t_values.len() {
            out.push(Violation::CountMismatch {
                stroke: id(),
                points: s.points.len(),
                t_values: s.t_values.len(),
            });
        }
        for (i, p) in s.points.iter().enumerate() {
            if p.col < 0 || p.col as u32 > frame.x_max() {
                out.push(Violation::OutOfRange {
                    stroke: id(),
                    index: i,
                    axis: Axis::Col,
                    value: p.col,
                    max: frame.x_max(),
                });
            }
            if p.row < 0 || p.row as u32 > frame.y_max() {
                out.push(Violation::OutOfRange {
                    stroke: id(),
                    index: i,
                    axis: Axis::Row,
                    value: p.row,
                    max: frame.y_max(),
                });
            }
        }
        for (i, &t) in s.t_values.iter().enumerate() {
            if !(0.0..=1.0).contains(&t) {
                out.push(Violation::TOutOfUnit { stroke: id(), index: i, value: t });
            }
        }
        for (i, w) in s.t_values.windows(2).enumerate() {
            if w[1] < w[0] {
                out.push(Violation::TDecreasing { stroke: id(), index: i + 1 });
            }
        }
        if s.t_values.len() >= 2 && (s.t_values[0] != 0.0 || s.t_values[s.t_values.len() - 1] != 1.0) {
            out.push(Violation::TEndpoints { stroke: id() });
        }
        if let Some(text) = &s.text {
            if s.points.len() != 1 {
                out.push(Violation::MultiPointText { stroke: id(), points: s.points.len() });
            }
            if !(text.style.size > 0.0 && text.style.size.is_finite()) {
                out.push(Violation::BadTextSize { stroke: id() });
            }
            if parse_color(&text.style.color).is_none() {
                out.push(Violation::BadColor { stroke: id(), color: text.style.color.clone() });
            }
        }
    }
    if set.final_answer_early {
        out.push(Violation::FinalAnswerEarly);
    }
    out
}
