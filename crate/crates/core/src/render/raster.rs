//! RGBA raster buffers and the small set of hard-edged drawing operations the
//! compositor and the task renderers need.

use std::fmt;
use std::io::Cursor;

use base64::Engine as _;
use sha2::{Digest, Sha256};

use crate::color::Rgb;
use crate::geom::{point_segment_distance, PixelPoint, PixelRect};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("buffer of {len} bytes does not match {width}x{height} RGBA")]
    BadBuffer { width: u32, height: u32, len: usize },
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("image encode failed: {0}")]
    Encode(String),
}

/// 8-bit RGBA image, row-major, top row first.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RasterImage({}x{}, {})", self.width, self.height, &self.sha256()[..12])
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 4);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&[fill.0, fill.1, fill.2, 255]);
        }
        Self { width, height, data }
    }

    pub fn from_rgba(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if data.len() != width as usize * height as usize * 4 {
            return Err(ImageError::BadBuffer { width, height, len: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    fn idx(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 4
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = self.idx(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2], self.data[i + 3]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, c: Rgb) {
        let i = self.idx(x, y);
        self.data[i..i + 4].copy_from_slice(&[c.0, c.1, c.2, 255]);
    }

    /// Source-over blend of `c` at opacity `alpha`.
    pub fn blend_pixel(&mut self, x: u32, y: u32, c: Rgb, alpha: u8) {
        if alpha == 255 {
            return self.set_pixel(x, y, c);
        }
        let i = self.idx(x, y);
        let a = alpha as u32;
        for (k, v) in [c.0, c.1, c.2].into_iter().enumerate() {
            let d = self.data[i + k] as u32;
            self.data[i + k] = ((v as u32 * a + d * (255 - a) + 127) / 255) as u8;
        }
        let da = self.data[i + 3] as u32;
        self.data[i + 3] = (a + (da * (255 - a) + 127) / 255).min(255) as u8;
    }

    pub fn crop(&self, x: u32, y: u32, width: u32, height: u32) -> RasterImage {
        let mut data = Vec::with_capacity(width as usize * height as usize * 4);
        for row in y..y + height {
            let s = self.idx(x, row);
            data.extend_from_slice(&self.data[s..s + width as usize * 4]);
        }
        RasterImage { width, height, data }
    }

    /// Copies `src` with its top-left corner at (`x`, `y`), clipped.
    pub fn paste(&mut self, src: &RasterImage, x: u32, y: u32) {
        let w = src.width.min(self.width.saturating_sub(x));
        for row in 0..src.height.min(self.height.saturating_sub(y)) {
            let d = self.idx(x, y + row);
            let s = src.idx(0, row);
            self.data[d..d + w as usize * 4].copy_from_slice(&src.data[s..s + w as usize * 4]);
        }
    }

    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.data);
        hex(&h.finalize())
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        let buf = image::RgbaImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| ImageError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn to_png_data_url(&self) -> Result<String, ImageError> {
        Ok(format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(self.to_png()?)))
    }

    /// Decodes PNG or JPEG.
    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        if bytes.is_empty() {
            return Err(ImageError::Decode("empty input".into()));
        }
        let img = image::load_from_memory(bytes).map_err(|e| ImageError::Decode(e.to_string()))?;
        let rgba = img.to_rgba8();
        let (w, h) = rgba.dimensions();
        Ok(Self { width: w, height: h, data: rgba.into_raw() })
    }

    pub fn fill_rect(&mut self, r: PixelRect, c: Rgb) {
        let mut m = Mask::new(self.width, self.height);
        m.add_rect(r);
        self.paint(&m, c, 255);
    }

    pub fn fill_circle(&mut self, center: PixelPoint, radius: f64, c: Rgb) {
        let mut m = Mask::new(self.width, self.height);
        m.add_disc(center, radius);
        self.paint(&m, c, 255);
    }

    pub fn stroke_polyline(&mut self, pts: &[PixelPoint], width: f64, c: Rgb) {
        let mut m = Mask::new(self.width, self.height);
        m.add_polyline(pts, width);
        self.paint(&m, c, 255);
    }

    pub fn dashed_line(&mut self, a: PixelPoint, b: PixelPoint, width: f64, dash: f64, gap: f64, c: Rgb) {
        let len = a.dist(b);
        if len == 0.0 {
            return;
        }
        let mut m = Mask::new(self.width, self.height);
        let mut s = 0.0;
        while s < len {
            let e = (s + dash).min(len);
            m.add_polyline(&[a.lerp(b, s / len), a.lerp(b, e / len)], width);
            s += dash + gap;
        }
        self.paint(&m, c, 255);
    }

    pub fn draw_text(&mut self, text: &str, center: PixelPoint, px: f64, c: Rgb) {
        let mut m = Mask::new(self.width, self.height);
        m.add_text(text, center, px);
        self.paint(&m, c, 255);
    }

    /// Blends `c` through every covered pixel of `mask` once.
    pub fn paint(&mut self, mask: &Mask, c: Rgb, alpha: u8) {
        let Some((x0, y0, x1, y1)) = mask.bbox else { return };
        for y in y0..=y1 {
            for x in x0..=x1 {
                if mask.get(x, y) {
                    self.blend_pixel(x, y, c, alpha);
                }
            }
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Binary coverage over an image, sampled at pixel centers. Shapes added to
/// one mask are unioned, so overlapping parts of a layer blend only once.
#[derive(Debug, Clone)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    bbox: Option<(u32, u32, u32, u32)>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize], bbox: None }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    fn set(&mut self, x: u32, y: u32) {
        self.bits[y as usize * self.width as usize + x as usize] = true;
        self.bbox = Some(match self.bbox {
            None => (x, y, x, y),
            Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
        });
    }

    /// Pixel index range whose centers can fall inside `[lo, hi]`.
    fn span(lo: f64, hi: f64, n: u32) -> Option<(u32, u32)> {
        let a = (lo - 0.5).ceil().max(0.0);
        let b = (hi - 0.5).floor().min(n as f64 - 1.0);
        (a <= b).then_some((a as u32, b as u32))
    }

    fn fill_where(&mut self, r: PixelRect, inside: impl Fn(PixelPoint) -> bool) {
        let (Some((x0, x1)), Some((y0, y1))) =
            (Self::span(r.x0, r.x1, self.width), Self::span(r.y0, r.y1, self.height))
        else {
            return;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                if inside(PixelPoint::new(x as f64 + 0.5, y as f64 + 0.5)) {
                    self.set(x, y);
                }
            }
        }
    }

    pub fn add_rect(&mut self, r: PixelRect) {
        self.fill_where(r, |_| true);
    }

    pub fn add_disc(&mut self, c: PixelPoint, radius: f64) {
        let r2 = radius * radius;
        self.fill_where(PixelRect::from_center(c, radius, radius), |p| p.dist2(c) <= r2);
    }

    /// Round-capped segment of the given total width.
    pub fn add_capsule(&mut self, a: PixelPoint, b: PixelPoint, width: f64) {
        let h = width / 2.0;
        let bb = PixelRect::new(a.x, a.y, b.x, b.y);
        let bb = PixelRect::new(bb.x0 - h, bb.y0 - h, bb.x1 + h, bb.y1 + h);
        self.fill_where(bb, |p| point_segment_distance(p, a, b) <= h);
    }

    pub fn add_polyline(&mut self, pts: &[PixelPoint], width: f64) {
        match pts {
            [] => {}
            [p] => self.add_disc(*p, width / 2.0),
            _ => pts.windows(2).for_each(|w| self.add_capsule(w[0], w[1], width)),
        }
    }

    /// Even-odd fill of a closed polygon.
    pub fn add_polygon(&mut self, poly: &[PixelPoint]) {
        let Some(bb) = PixelRect::bounding(poly.iter().copied()) else { return };
        self.fill_where(bb, |p| point_in_polygon(p, poly));
    }

    /// Text in the built-in 8×8 bitmap font, centered on `center`, with glyph
    /// cells `px` pixels square.
    pub fn add_text(&mut self, text: &str, center: PixelPoint, px: f64) {
        let glyphs: Vec<[u8; 8]> = text.chars().map(glyph).collect();
        if glyphs.is_empty() || px <= 0.0 {
            return;
        }
        let total_w = px * glyphs.len() as f64;
        let x0 = center.x - total_w / 2.0;
        let y0 = center.y - px / 2.0;
        let cell = px / 8.0;
        let bb = PixelRect::new(x0, y0, x0 + total_w, y0 + px);
        self.fill_where(bb, |p| {
            let gx = ((p.x - x0) / cell).floor();
            let gy = ((p.y - y0) / cell).floor();
            if gx < 0.0 || gy < 0.0 || gy >= 8.0 {
                return false;
            }
            let gi = (gx as usize) / 8;
            let col = gx as usize % 8;
            glyphs.get(gi).is_some_and(|g| g[gy as usize] >> col & 1 == 1)
        });
    }
}

/// Even-odd crossing test.
pub fn point_in_polygon(p: PixelPoint, poly: &[PixelPoint]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    inside
}

fn glyph(c: char) -> [u8; 8] {
    let code = c as usize;
    if code < 128 {
        font8x8::legacy::BASIC_LEGACY[code]
    } else {
        font8x8::legacy::BASIC_LEGACY['?' as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip() {
        let mut img = RasterImage::new(7, 5, Rgb::WHITE);
        img.set_pixel(3, 2, Rgb(10, 20, 30));
        let back = RasterImage::decode(&img.to_png().unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn empty_bytes_do_not_decode() {
        assert!(RasterImage::decode(&[]).is_err());
    }

    #[test]
    fn crop_and_paste_are_inverse() {
        let mut img = RasterImage::new(20, 10, Rgb::WHITE);
        img.fill_circle(PixelPoint::new(5.0, 5.0), 3.0, Rgb::BLACK);
        let part = img.crop(2, 1, 8, 8);
        let mut blank = RasterImage::new(20, 10, Rgb::WHITE);
        blank.paste(&part, 2, 1);
        assert_eq!(blank, img);
    }

    #[test]
    fn capsule_coverage_matches_distance() {
        let mut m = Mask::new(30, 30);
        let (a, b) = (PixelPoint::new(3.0, 4.0), PixelPoint::new(25.0, 20.0));
        m.add_capsule(a, b, 3.0);
        for y in 0..30 {
            for x in 0..30 {
                let c = PixelPoint::new(x as f64 + 0.5, y as f64 + 0.5);
                assert_eq!(m.get(x, y), point_segment_distance(c, a, b) <= 1.5);
            }
        }
    }

    #[test]
    fn text_leaves_ink() {
        let mut m = Mask::new(40, 20);
        m.add_text("12", PixelPoint::new(20.0, 10.0), 16.0);
        assert!(m.count() > 20);
    }
}
