//! Annotation data model: grid references, coordinate frames, strokes and
//! the parsed annotation set, plus the two text dialects they travel in.
//!
//! The XML-style dialect is the one models are prompted to emit:
//!
//! ```text
//! <answer>
//! <concept>Numbering each apple</concept>
//! <strokes>
//! <s1>
//!   <points>'x12y20','x13y20'</points>
//!   <t_values>0.00,1.00</t_values>
//!   <text size="1.6" color="#ff0066">'1'</text>
//!   <id>marker_apple1</id>
//! </s1>
//! </strokes>
//! <final_answer>1</final_answer>
//! </answer>
//! ```
//!
//! The JSON dialect (`.anno.json`) carries the same information.

mod parse;
mod serialize;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parse::{normalize_t_values, parse_annotation, parse_json, parse_xml, repair, ParseError};
pub use serialize::{serialize_annotation, Dialect};
pub use validate::{validate, Axis, Violation};

/// A cell (grid mode) or unit position (normalized mode), written `xAyB`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridRef {
    #[serde(rename = "x")]
    pub col: i32,
    #[serde(rename = "y")]
    pub row: i32,
}

impl GridRef {
    pub const fn new(col: i32, row: i32) -> Self {
        Self { col, row }
    }
}

impl fmt::Display for GridRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}y{}", self.col, self.row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    TopLeft,
    #[default]
    BottomLeft,
}

/// How stroke tokens map onto the image.
///
/// In grid mode the model references cells `0..=res_x` by `0..=res_y` on a
/// ruler appended to the image; in normalized mode tokens are positions on a
/// `scale`-unit square stretched over the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CoordinateFrame {
    GridCells { res_x: u32, res_y: u32, origin: Origin },
    Normalized { scale: u32, origin: Origin },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid coordinate frame: {0}")]
pub struct FrameError(&'static str);

impl CoordinateFrame {
    pub const DEFAULT_GRID_RES: u32 = 50;
    pub const DEFAULT_SCALE: u32 = 1000;

    pub fn grid(res_x: u32, res_y: u32, origin: Origin) -> Result<Self, FrameError> {
        if res_x == 0 || res_y == 0 {
            return Err(FrameError("grid resolution must be at least 1"));
        }
        Ok(Self::GridCells { res_x, res_y, origin })
    }

    pub fn normalized(scale: u32, origin: Origin) -> Result<Self, FrameError> {
        if scale == 0 {
            return Err(FrameError("normalized scale must be at least 1"));
        }
        Ok(Self::Normalized { scale, origin })
    }

    pub fn origin(&self) -> Origin {
        match *self {
            Self::GridCells { origin, .. } | Self::Normalized { origin, .. } => origin,
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, Self::GridCells { .. })
    }

    /// Largest valid column index.
    pub fn x_max(&self) -> u32 {
        match *self {
            Self::GridCells { res_x, .. } => res_x,
            Self::Normalized { scale, .. } => scale,
        }
    }

    /// Largest valid row index.
    pub fn y_max(&self) -> u32 {
        match *self {
            Self::GridCells { res_y, .. } => res_y,
            Self::Normalized { scale, .. } => scale,
        }
    }

    pub fn contains(&self, r: GridRef) -> bool {
        r.col >= 0 && r.row >= 0 && r.col as u32 <= self.x_max() && r.row as u32 <= self.y_max()
    }

    pub fn clamp(&self, r: GridRef) -> GridRef {
        GridRef {
            col: r.col.clamp(0, self.x_max() as i32),
            row: r.row.clamp(0, self.y_max() as i32),
        }
    }
}

impl Default for CoordinateFrame {
    fn default() -> Self {
        Self::GridCells {
            res_x: Self::DEFAULT_GRID_RES,
            res_y: Self::DEFAULT_GRID_RES,
            origin: Origin::BottomLeft,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SizeUnit {
    /// Multiple of the cell height.
    #[serde(rename = "cells")]
    Cells,
    #[serde(rename = "px")]
    Pixels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextStyle {
    pub size: f64,
    pub unit: SizeUnit,
    pub color: String,
}

impl Default for TextStyle {
    fn default() -> Self {
        Self { size: 1.0, unit: SizeUnit::Cells, color: "black".to_owned() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrokeText {
    pub content: String,
    #[serde(flatten)]
    pub style: TextStyle,
}

/// One drawing unit: ordered samples with their curve parameters, or a text
/// label anchored at a single sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub id: String,
    pub points: Vec<GridRef>,
    #[serde(rename = "t")]
    pub t_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<StrokeText>,
}

impl Stroke {
    pub fn new(id: impl Into<String>, points: Vec<GridRef>, t_values: Vec<f64>) -> Self {
        Self { id: id.into(), points, t_values, text: None }
    }

    /// A single-point stroke carrying a label.
    pub fn label(id: impl Into<String>, anchor: GridRef, content: impl Into<String>, style: TextStyle) -> Self {
        Self {
            id: id.into(),
            points: vec![anchor],
            t_values: vec![0.0],
            text: Some(StrokeText { content: content.into(), style }),
        }
    }

    /// Straight segments through `points`, with every interior point written
    /// twice so it renders as a corner.
    pub fn polyline(id: impl Into<String>, points: &[GridRef]) -> Self {
        let id = id.into();
        match points.len() {
            0 => Self::new(id, Vec::new(), Vec::new()),
            1 => Self::new(id, points.to_vec(), vec![0.0]),
            n => {
                let segs = (n - 1) as f64;
                let mut pts = Vec::with_capacity(2 * n - 2);
                let mut ts = Vec::with_capacity(2 * n - 2);
                for (i, p) in points.iter().enumerate() {
                    let t = i as f64 / segs;
                    pts.push(*p);
                    ts.push(t);
                    if i != 0 && i != n - 1 {
                        pts.push(*p);
                        ts.push(t);
                    }
                }
                Self::new(id, pts, ts)
            }
        }
    }

    pub fn is_text(&self) -> bool {
        self.text.is_some()
    }
}

/// Everything a model emitted in one `<answer>` block.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(default)]
    pub concept: Option<String>,
    #[serde(default)]
    pub strokes: Vec<Stroke>,
    #[serde(default)]
    pub final_answer: Option<String>,
    /// Set by the parser when `<final_answer>` appeared before `</strokes>`.
    #[serde(skip)]
    pub final_answer_early: bool,
}

impl AnnotationSet {
    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }

    pub fn stroke(&self, id: &str) -> Option<&Stroke> {
        self.strokes.iter().find(|s| s.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_bounds() {
        let f = CoordinateFrame::grid(50, 40, Origin::BottomLeft).unwrap();
        assert!(f.contains(GridRef::new(50, 40)));
        assert!(!f.contains(GridRef::new(51, 0)));
        assert!(!f.contains(GridRef::new(0, -1)));
        assert_eq!(f.clamp(GridRef::new(60, -3)), GridRef::new(50, 0));
        assert!(CoordinateFrame::grid(0, 1, Origin::TopLeft).is_err());
        assert!(CoordinateFrame::normalized(0, Origin::TopLeft).is_err());
    }

    #[test]
    fn polyline_doubles_interior_points() {
        let s = Stroke::polyline("p", &[GridRef::new(0, 0), GridRef::new(5, 0), GridRef::new(5, 5)]);
        assert_eq!(s.points.len(), 4);
        assert_eq!(s.t_values, vec![0.0, 0.5, 0.5, 1.0]);
    }
}
