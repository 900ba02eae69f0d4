use crate::geom::PixelPoint;
use crate::stroke::{CoordinateFrame, GridRef, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("{0} lies outside the coordinate frame")]
pub struct OutOfFrame(pub GridRef);

/// Pixel position of a stroke token on a `width` × `height` image.
///
/// Grid tokens land on cell centers, with `res + 1` cells per axis;
/// normalized tokens scale linearly. A bottom-left origin flips rows.
pub fn pixel_of(r: GridRef, frame: &CoordinateFrame, width: u32, height: u32) -> Result<PixelPoint, OutOfFrame> {
    if !frame.contains(r) {
        return Err(OutOfFrame(r));
    }
    Ok(pixel_of_unchecked(r, frame, width, height))
}

/// Like [`pixel_of`] but clamps out-of-frame tokens onto the frame boundary.
pub fn pixel_of_clamped(r: GridRef, frame: &CoordinateFrame, width: u32, height: u32) -> PixelPoint {
    pixel_of_unchecked(frame.clamp(r), frame, width, height)
}

fn pixel_of_unchecked(r: GridRef, frame: &CoordinateFrame, width: u32, height: u32) -> PixelPoint {
    let (w, h) = (width as f64, height as f64);
    let (x, y_down) = match *frame {
        CoordinateFrame::GridCells { res_x, res_y, .. } => {
            let cw = w / (res_x as f64 + 1.0);
            let ch = h / (res_y as f64 + 1.0);
            ((r.col as f64 + 0.5) * cw, (r.row as f64 + 0.5) * ch)
        }
        CoordinateFrame::Normalized { scale, .. } => {
            (r.col as f64 * w / scale as f64, r.row as f64 * h / scale as f64)
        }
    };
    let y = match frame.origin() {
        Origin::TopLeft => y_down,
        Origin::BottomLeft => h - y_down,
    };
    PixelPoint::new(x, y)
}

/// Nearest token to a pixel position; the inverse of [`pixel_of`] up to
/// quantization.
pub fn grid_ref_of(p: PixelPoint, frame: &CoordinateFrame, width: u32, height: u32) -> GridRef {
    let (w, h) = (width as f64, height as f64);
    let y_down = match frame.origin() {
        Origin::TopLeft => p.y,
        Origin::BottomLeft => h - p.y,
    };
    let r = match *frame {
        CoordinateFrame::GridCells { res_x, res_y, .. } => {
            let cw = w / (res_x as f64 + 1.0);
            let ch = h / (res_y as f64 + 1.0);
            GridRef::new((p.x / cw - 0.5).round() as i32, (y_down / ch - 0.5).round() as i32)
        }
        CoordinateFrame::Normalized { scale, .. } => GridRef::new(
            (p.x * scale as f64 / w).round() as i32,
            (y_down * scale as f64 / h).round() as i32,
        ),
    };
    frame.clamp(r)
}

/// Pixel height of one grid cell (or one normalized unit).
pub fn cell_height(frame: &CoordinateFrame, height: u32) -> f64 {
    match *frame {
        CoordinateFrame::GridCells { res_y, .. } => height as f64 / (res_y as f64 + 1.0),
        CoordinateFrame::Normalized { scale, .. } => height as f64 / scale as f64,
    }
}
