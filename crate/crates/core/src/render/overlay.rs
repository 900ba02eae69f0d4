use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::coords::{cell_height, pixel_of_clamped};
use super::raster::{Mask, RasterImage};
use crate::color::{parse_color, Rgb, DEFAULT_PALETTE};
use crate::fit::{stroke_to_primitives, PathPrimitive};
use crate::geom::PixelPoint;
use crate::stroke::{validate, AnnotationSet, CoordinateFrame, SizeUnit, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerContent {
    Path { primitives: Vec<PathPrimitive> },
    Text { anchor: PixelPoint, content: String, font_px: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub stroke_id: String,
    pub visible: bool,
    pub color: String,
    pub stroke_width: f64,
    pub content: LayerContent,
}

/// Vector overlay drawn above an untouched source image. The source is only
/// ever referenced (`background`), never embedded or altered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayDocument {
    pub width: u32,
    pub height: u32,
    pub background: Option<String>,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayStyle {
    pub palette: Vec<String>,
    /// Defaults to 3 px per 1000 px of image width.
    pub stroke_width: Option<f64>,
    pub background: Option<String>,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self { palette: DEFAULT_PALETTE.iter().map(|s| s.to_string()).collect(), stroke_width: None, background: None }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("annotation set is not renderable: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("overlay is {overlay:?} but base image is {base:?}")]
    DimensionMismatch { overlay: (u32, u32), base: (u32, u32) },
    #[error("palette is empty")]
    EmptyPalette,
}

pub fn default_stroke_width(width: u32) -> f64 {
    3.0 * width as f64 / 1000.0
}

/// Builds one layer per stroke, in stroke order. Out-of-frame points are
/// clamped; any other violation rejects the render.
pub fn render_overlay(
    set: &AnnotationSet,
    frame: &CoordinateFrame,
    width: u32,
    height: u32,
    style: &OverlayStyle,
) -> Result<OverlayDocument, RenderError> {
    let blocking: Vec<Violation> = validate(set, frame).into_iter().filter(Violation::blocks_render).collect();
    if !blocking.is_empty() {
        return Err(RenderError::Invalid(blocking));
    }
    if style.palette.is_empty() {
        return Err(RenderError::EmptyPalette);
    }
    let stroke_width = style.stroke_width.unwrap_or_else(|| default_stroke_width(width));
    let mut next_color = 0usize;
    let layers = set
        .strokes
        .iter()
        .map(|s| match &s.text {
            Some(text) => {
                let font_px = match text.style.unit {
                    SizeUnit::Cells => text.style.size * cell_height(frame, height),
                    SizeUnit::Pixels => text.style.size,
                };
                Layer {
                    stroke_id: s.id.clone(),
                    visible: true,
                    color: text.style.color.clone(),
                    stroke_width,
                    content: LayerContent::Text {
                        anchor: pixel_of_clamped(s.points[0], frame, width, height),
                        content: text.content.clone(),
                        font_px,
                    },
                }
            }
            None => {
                let color = style.palette[next_color % style.palette.len()].clone();
                next_color += 1;
                Layer {
                    stroke_id: s.id.clone(),
                    visible: true,
                    color,
                    stroke_width,
                    content: LayerContent::Path { primitives: stroke_to_primitives(s, frame, width, height) },
                }
            }
        })
        .collect();
    Ok(OverlayDocument { width, height, background: style.background.clone(), layers })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn path_data(prims: &[PathPrimitive]) -> String {
    let mut d = String::new();
    for p in prims {
        match p {
            PathPrimitive::Dot { .. } => {}
            PathPrimitive::Line { a, b } => {
                let _ = write!(d, "M {:.2} {:.2} L {:.2} {:.2} ", a.x, a.y, b.x, b.y);
            }
            PathPrimitive::CubicChain { segments } => {
                let _ = write!(d, "M {:.2} {:.2} ", segments[0].p0.x, segments[0].p0.y);
                for s in segments {
                    let _ = write!(
                        d,
                        "C {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} ",
                        s.p1.x, s.p1.y, s.p2.x, s.p2.y, s.p3.x, s.p3.y
                    );
                }
            }
        }
    }
    d.trim_end().to_owned()
}

impl OverlayDocument {
    pub fn layer_mut(&mut self, stroke_id: &str) -> Option<&mut Layer> {
        self.layers.iter_mut().find(|l| l.stroke_id == stroke_id)
    }

    pub fn set_visible(&mut self, stroke_id: &str, visible: bool) -> bool {
        match self.layer_mut(stroke_id) {
            Some(l) => {
                l.visible = visible;
                true
            }
            None => false,
        }
    }

    /// SVG 1.1 text. One `<g>` per layer carrying `id` and
    /// `data-stroke-id`; hidden layers stay in the document with
    /// `display="none"`.
    pub fn to_svg(&self) -> String {
        let (w, h) = (self.width, self.height);
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" \
             version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
        );
        if let Some(bg) = &self.background {
            let _ = writeln!(
                out,
                "  <image id=\"background\" x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" xlink:href=\"{}\"/>",
                xml_escape(bg)
            );
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let hidden = if layer.visible { "" } else { " display=\"none\"" };
            let color = xml_escape(&layer.color);
            let _ = write!(
                out,
                "  <g id=\"stroke-{}\" data-stroke-id=\"{}\"{hidden}",
                i + 1,
                xml_escape(&layer.stroke_id)
            );
            match &layer.content {
                LayerContent::Path { primitives } => {
                    let _ = writeln!(
                        out,
                        " fill=\"none\" stroke=\"{color}\" stroke-width=\"{:.2}\" stroke-linecap=\"round\" stroke-linejoin=\"round\">",
                        layer.stroke_width
                    );
                    let d = path_data(primitives);
                    if !d.is_empty() {
                        let _ = writeln!(out, "    <path d=\"{d}\"/>");
                    }
                    for p in primitives {
                        if let PathPrimitive::Dot { center, radius } = p {
                            let _ = writeln!(
                                out,
                                "    <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"{color}\" stroke=\"none\"/>",
                                center.x, center.y, radius
                            );
                        }
                    }
                }
                LayerContent::Text { anchor, content, font_px } => {
                    let _ = writeln!(out, ">");
                    let _ = writeln!(
                        out,
                        "    <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"{:.2}\" fill=\"{color}\" \
                         text-anchor=\"middle\" dominant-baseline=\"central\" font-family=\"monospace\">{}</text>",
                        anchor.x,
                        anchor.y,
                        font_px,
                        xml_escape(content)
                    );
                }
            }
            out.push_str("  </g>\n");
        }
        out.push_str("</svg>\n");
        out
    }

    /// Coverage of one layer as it would be rasterized.
    pub fn layer_mask(&self, layer: &Layer) -> Mask {
        let mut m = Mask::new(self.width, self.height);
        match &layer.content {
            LayerContent::Path { primitives } => {
                for p in primitives {
                    match p {
                        PathPrimitive::Dot { center, radius } => m.add_disc(*center, *radius),
                        _ => m.add_polyline(&p.polyline(32), layer.stroke_width),
                    }
                }
            }
            LayerContent::Text { anchor, content, font_px } => m.add_text(content, *anchor, *font_px),
        }
        m
    }
}

/// Rasterizes the visible layers over a copy of `base`.
pub fn composite(base: &RasterImage, overlay: &OverlayDocument) -> Result<RasterImage, RenderError> {
    if base.dims() != (overlay.width, overlay.height) {
        return Err(RenderError::DimensionMismatch { overlay: (overlay.width, overlay.height), base: base.dims() });
    }
    let mut out = base.clone();
    for layer in overlay.layers.iter().filter(|l| l.visible) {
        let color = parse_color(&layer.color).unwrap_or(Rgb::BLACK);
        out.paint(&overlay.layer_mask(layer), color, 255);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::point_segment_distance;
    use crate::stroke::{parse_annotation, GridRef, Origin, Stroke, TextStyle};

    fn vpct() -> (AnnotationSet, CoordinateFrame) {
        (
            parse_annotation(include_str!("../../tests/data/vpct_output.txt")).unwrap(),
            CoordinateFrame::normalized(1000, Origin::TopLeft).unwrap(),
        )
    }

    #[test]
    fn vpct_layers() {
        let (set, frame) = vpct();
        let doc = render_overlay(&set, &frame, 1000, 1000, &OverlayStyle::default()).unwrap();
        assert_eq!(doc.layers.len(), 5);
        assert!(doc.layers.iter().all(|l| matches!(l.content, LayerContent::Path { .. })));
        let mut colors: Vec<_> = doc.layers.iter().map(|l| l.color.clone()).collect();
        colors.dedup();
        assert_eq!(colors.len(), 5);
        let svg = doc.to_svg();
        assert_eq!(svg.matches("data-stroke-id=").count(), 5);
        assert!(svg.contains("data-stroke-id=\"path_bounce\""));
    }

    #[test]
    fn empty_set_has_no_layers() {
        let style = OverlayStyle { background: Some("base.png".into()), ..Default::default() };
        let doc = render_overlay(&AnnotationSet::default(), &CoordinateFrame::default(), 100, 80, &style).unwrap();
        assert!(doc.layers.is_empty());
        assert!(doc.to_svg().contains("id=\"background\""));
    }

    #[test]
    fn counting_set_is_all_text() {
        let frame = CoordinateFrame::grid(50, 50, Origin::BottomLeft).unwrap();
        let strokes = (1..=9)
            .map(|i| Stroke::label(format!("marker_{i}"), GridRef::new(i * 5, 10), i.to_string(), TextStyle::default()))
            .collect();
        let set = AnnotationSet { strokes, ..Default::default() };
        let doc = render_overlay(&set, &frame, 510, 510, &OverlayStyle::default()).unwrap();
        assert_eq!(doc.layers.len(), 9);
        for l in &doc.layers {
            match l.content {
                LayerContent::Text { font_px, .. } => assert_eq!(font_px, 10.0),
                _ => panic!("expected text layer"),
            }
        }
    }

    #[test]
    fn svg_is_deterministic() {
        let (set, frame) = vpct();
        let a = render_overlay(&set, &frame, 1000, 1000, &OverlayStyle::default()).unwrap().to_svg();
        let b = render_overlay(&set, &frame, 1000, 1000, &OverlayStyle::default()).unwrap().to_svg();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_sets_are_rejected_but_out_of_range_is_clamped() {
        let frame = CoordinateFrame::grid(10, 10, Origin::BottomLeft).unwrap();
        let off = Stroke::new("o", vec![GridRef::new(12, 3)], vec![0.0]);
        let set = AnnotationSet { strokes: vec![off.clone(), off], ..Default::default() };
        assert!(matches!(render_overlay(&set, &frame, 110, 110, &OverlayStyle::default()), Err(RenderError::Invalid(_))));
        let set = AnnotationSet { strokes: vec![Stroke::new("o", vec![GridRef::new(12, 3)], vec![0.0])], ..Default::default() };
        assert!(render_overlay(&set, &frame, 110, 110, &OverlayStyle::default()).is_ok());
    }

    #[test]
    fn hidden_layers_leave_base_untouched() {
        let (set, frame) = vpct();
        let mut doc = render_overlay(&set, &frame, 200, 200, &OverlayStyle::default()).unwrap();
        for l in &mut doc.layers {
            l.visible = false;
        }
        let base = RasterImage::new(200, 200, Rgb(40, 90, 200));
        assert_eq!(composite(&base, &doc).unwrap(), base);
    }

    #[test]
    fn line_layer_is_local() {
        let frame = CoordinateFrame::normalized(1000, Origin::TopLeft).unwrap();
        let set = AnnotationSet {
            strokes: vec![Stroke::new("l", vec![GridRef::new(100, 200), GridRef::new(800, 650)], vec![0.0, 1.0])],
            ..Default::default()
        };
        let style = OverlayStyle { palette: vec!["#000000".into()], stroke_width: Some(4.0), background: None };
        let doc = render_overlay(&set, &frame, 120, 100, &style).unwrap();
        let base = RasterImage::new(120, 100, Rgb::WHITE);
        let out = composite(&base, &doc).unwrap();
        let (a, b) = (PixelPoint::new(12.0, 20.0), PixelPoint::new(96.0, 65.0));
        for y in 0..100 {
            for x in 0..120 {
                let c = PixelPoint::new(x as f64 + 0.5, y as f64 + 0.5);
                let on_line = point_segment_distance(c, a, b) <= 2.0;
                assert_eq!(out.pixel(x, y) != [255, 255, 255, 255], on_line, "pixel {x},{y}");
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let doc = OverlayDocument { width: 10, height: 10, background: None, layers: vec![] };
        assert!(matches!(composite(&RasterImage::new(11, 10, Rgb::WHITE), &doc), Err(RenderError::DimensionMismatch { .. })));
    }
}
