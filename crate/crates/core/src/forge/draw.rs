use std::path::Path;

use super::maze::{Dir, MazeGt};
use super::{BallScene, DotsGt, GroundTruth, TaskInstance};
use crate::color::Rgb;
use crate::geom::{PixelPoint, PixelRect};
use crate::render::{ImageError, RasterImage};

#[derive(Debug, thiserror::Error)]
pub enum DrawError {
    #[error("instance {0} has no generated scene and no image path")]
    MissingFile(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub const MAZE_MARGIN: f64 = 40.0;
pub const MAZE_GREEN: Rgb = Rgb(40, 170, 60);
pub const MAZE_RED: Rgb = Rgb(215, 40, 40);
pub const BALL_COLOR: Rgb = Rgb(220, 30, 30);

/// Draws generated tasks from their truth payload; other kinds are read
/// from `image.path`, relative to `base_dir`.
pub fn render_task_image(inst: &TaskInstance, base_dir: Option<&Path>) -> Result<RasterImage, DrawError> {
    let (w, h) = (inst.image.width, inst.image.height);
    match &inst.truth {
        GroundTruth::Dots(gt) => Ok(draw_dots(gt, w, h)),
        GroundTruth::Maze(gt) => Ok(draw_maze(gt, w, h)),
        GroundTruth::Ball(gt) => Ok(draw_ball_scene(&gt.scene)),
        _ => {
            if inst.image.path.is_empty() {
                return Err(DrawError::MissingFile(inst.id.clone()));
            }
            let path = match base_dir {
                Some(d) => d.join(&inst.image.path),
                None => inst.image.path.clone().into(),
            };
            let bytes = std::fs::read(&path).map_err(|source| DrawError::Io { path: path.display().to_string(), source })?;
            Ok(RasterImage::decode(&bytes)?)
        }
    }
}

pub fn draw_dots(gt: &DotsGt, w: u32, h: u32) -> RasterImage {
    let mut img = RasterImage::new(w, h, Rgb::WHITE);
    for p in &gt.points {
        img.fill_circle(*p, gt.dot_radius, Rgb::BLACK);
    }
    for (label, anchor) in gt.labels.iter().zip(&gt.label_anchors) {
        img.draw_text(&label.to_string(), *anchor, (gt.dot_radius * 2.6).round(), Rgb::BLACK);
    }
    img
}

/// Solid black walls, dashed gray passable boundaries, green start cell and
/// red end cell.
pub fn draw_maze(gt: &MazeGt, w: u32, h: u32) -> RasterImage {
    let mut img = RasterImage::new(w, h, Rgb::WHITE);
    let cell = (w.min(h) as f64 - 2.0 * MAZE_MARGIN) / gt.rows.max(gt.cols) as f64;
    let corner = |r: u8, c: u8| PixelPoint::new(MAZE_MARGIN + c as f64 * cell, MAZE_MARGIN + r as f64 * cell);
    let inset = cell * 0.12;
    for (cellrc, color) in [(gt.start, MAZE_GREEN), (gt.end, MAZE_RED)] {
        let a = corner(cellrc.0, cellrc.1);
        img.fill_rect(PixelRect::new(a.x + inset, a.y + inset, a.x + cell - inset, a.y + cell - inset), color);
    }
    let gray = Rgb(150, 150, 150);
    let mut walls = vec![];
    for r in 0..gt.rows {
        for c in 0..gt.cols {
            let a = corner(r, c);
            for d in [Dir::Up, Dir::Left, Dir::Down, Dir::Right] {
                let (p, q) = match d {
                    Dir::Up => (a, a + PixelPoint::new(cell, 0.0)),
                    Dir::Left => (a, a + PixelPoint::new(0.0, cell)),
                    Dir::Down => (a + PixelPoint::new(0.0, cell), a + PixelPoint::new(cell, cell)),
                    Dir::Right => (a + PixelPoint::new(cell, 0.0), a + PixelPoint::new(cell, cell)),
                };
                if gt.has_wall((r, c), d) {
                    walls.push((p, q));
                } else if matches!(d, Dir::Up | Dir::Left) {
                    img.dashed_line(p, q, 2.0, 8.0, 6.0, gray);
                }
            }
        }
    }
    for (p, q) in walls {
        img.stroke_polyline(&[p, q], 6.0, Rgb::BLACK);
    }
    img
}

pub fn draw_ball_scene(scene: &BallScene) -> RasterImage {
    let mut img = RasterImage::new(scene.width, scene.height, Rgb::WHITE);
    let side_walls = 2;
    let segs = scene.segments();
    for s in &segs[..segs.len() - side_walls] {
        img.stroke_polyline(&[s.a, s.b], 5.0, Rgb::BLACK);
    }
    for (i, c) in scene.containers.iter().enumerate() {
        img.draw_text(&(i + 1).to_string(), c.center(), 24.0, Rgb(90, 90, 90));
    }
    img.fill_circle(scene.ball_start, scene.ball_radius, BALL_COLOR);
    img
}
