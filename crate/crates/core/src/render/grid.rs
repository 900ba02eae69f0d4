use serde::{Deserialize, Serialize};

use super::raster::RasterImage;
use crate::color::Rgb;
use crate::geom::{PixelPoint, PixelRect};
use crate::stroke::{CoordinateFrame, Origin};

/// Layout of the coordinate rulers appended to the left and bottom of an
/// image. The source image sits at `(left_margin, 0)` in the augmented raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAugmentation {
    pub left_margin: u32,
    pub bottom_margin: u32,
    /// Labels are printed every `tick_step` cells.
    pub tick_step: u32,
    pub label_px: f64,
    pub augmented_dims: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GridOptions {
    pub left_margin: Option<u32>,
    pub bottom_margin: Option<u32>,
    pub tick_step: Option<u32>,
    pub label_px: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("grid rulers need a grid-cell coordinate frame")]
pub struct NotAGridFrame;

/// One ruler label: its text and the pixel center it is drawn at.
#[derive(Debug, Clone, PartialEq)]
pub struct RulerLabel {
    pub text: String,
    pub center: PixelPoint,
}

const MARGIN_FRACTION: f64 = 0.06;
const LABEL_FRACTION: f64 = 0.025;
const NICE_STEPS: [u32; 9] = [1, 2, 5, 10, 20, 25, 50, 100, 250];

fn grid_res(frame: &CoordinateFrame) -> Result<(u32, u32), NotAGridFrame> {
    match *frame {
        CoordinateFrame::GridCells { res_x, res_y, .. } => Ok((res_x, res_y)),
        CoordinateFrame::Normalized { .. } => Err(NotAGridFrame),
    }
}

/// Smallest "nice" step whose label pitch leaves room for the widest label.
fn auto_step(res: u32, cell_px: f64, label_px: f64) -> u32 {
    let widest = res.to_string().len() as f64 * label_px;
    NICE_STEPS.iter().copied().find(|s| *s as f64 * cell_px >= 1.25 * widest).unwrap_or(res.max(1))
}

pub fn grid_layout(width: u32, height: u32, frame: &CoordinateFrame, opts: &GridOptions) -> Result<GridAugmentation, NotAGridFrame> {
    let (res_x, res_y) = grid_res(frame)?;
    let left = opts.left_margin.unwrap_or((MARGIN_FRACTION * width as f64).round() as u32);
    let bottom = opts.bottom_margin.unwrap_or((MARGIN_FRACTION * height as f64).round() as u32);
    let label_px = opts.label_px.unwrap_or((LABEL_FRACTION * height as f64).max(8.0).round());
    let tick_step = opts.tick_step.unwrap_or_else(|| {
        let cw = width as f64 / (res_x as f64 + 1.0);
        let ch = height as f64 / (res_y as f64 + 1.0);
        auto_step(res_x, cw, label_px).max(auto_step(res_y, ch, label_px))
    });
    Ok(GridAugmentation {
        left_margin: left,
        bottom_margin: bottom,
        tick_step: tick_step.max(1),
        label_px,
        augmented_dims: (width + left, height + bottom),
    })
}

impl GridAugmentation {
    /// Bottom-ruler labels, left to right, then left-ruler labels, in
    /// increasing row order. Coordinates are in the augmented raster.
    pub fn labels(&self, width: u32, height: u32, frame: &CoordinateFrame) -> (Vec<RulerLabel>, Vec<RulerLabel>) {
        let Ok((res_x, res_y)) = grid_res(frame) else { return (vec![], vec![]) };
        let (l, (w, h)) = (self.left_margin as f64, (width as f64, height as f64));
        let cw = w / (res_x as f64 + 1.0);
        let ch = h / (res_y as f64 + 1.0);
        let label_y = h + self.bottom_margin as f64 / 2.0;
        let bottom = (0..=res_x)
            .step_by(self.tick_step as usize)
            .map(|c| RulerLabel { text: c.to_string(), center: PixelPoint::new(l + (c as f64 + 0.5) * cw, label_y) })
            .collect();
        let left = (0..=res_y)
            .step_by(self.tick_step as usize)
            .map(|r| {
                let y_down = (r as f64 + 0.5) * ch;
                let y = match frame.origin() {
                    Origin::TopLeft => y_down,
                    Origin::BottomLeft => h - y_down,
                };
                RulerLabel { text: r.to_string(), center: PixelPoint::new(l / 2.0, y) }
            })
            .collect();
        (bottom, left)
    }
}

/// Appends labelled rulers to the left and bottom edges. Tick marks sit on
/// every cell boundary and labels on cell centers; the source pixels are
/// copied unchanged.
pub fn grid_augment(image: &RasterImage, frame: &CoordinateFrame, opts: &GridOptions) -> Result<(RasterImage, GridAugmentation), NotAGridFrame> {
    let (w, h) = image.dims();
    let layout = grid_layout(w, h, frame, opts)?;
    let (res_x, res_y) = grid_res(frame)?;
    let (aw, ah) = layout.augmented_dims;
    let mut out = RasterImage::new(aw, ah, Rgb::WHITE);
    out.paste(image, layout.left_margin, 0);

    let l = layout.left_margin as f64;
    let (wf, hf) = (w as f64, h as f64);
    let cw = wf / (res_x as f64 + 1.0);
    let ch = hf / (res_y as f64 + 1.0);
    let tick_len = (layout.bottom_margin as f64 * 0.2).max(2.0);
    let ink = Rgb(40, 40, 40);

    // Ticks are drawn strictly inside the margins so the image is untouched.
    for k in 0..=res_x + 1 {
        let x = l + k as f64 * cw;
        out.fill_rect(PixelRect::new(x - 0.5, hf, x + 0.5, hf + tick_len), ink);
    }
    for k in 0..=res_y + 1 {
        let y = k as f64 * ch;
        out.fill_rect(PixelRect::new(l - tick_len, y - 0.5, l, y + 0.5), ink);
    }
    let (bottom, left) = layout.labels(w, h, frame);
    for lab in bottom.iter().chain(&left) {
        out.draw_text(&lab.text, lab.center, layout.label_px, ink);
    }
    // Repaint the source region in case a glyph or tick spilled over it.
    out.paste(image, layout.left_margin, 0);
    Ok((out, layout))
}
