//! Coordinate mapping, vector overlays, grid rulers and raster compositing.

pub mod coords;
pub mod grid;
pub mod overlay;
pub mod raster;

pub use coords::{cell_height, grid_ref_of, pixel_of, pixel_of_clamped, OutOfFrame};
pub use grid::{grid_augment, grid_layout, GridAugmentation, GridOptions, NotAGridFrame, RulerLabel};
pub use overlay::{composite, default_stroke_width, render_overlay, Layer, LayerContent, OverlayDocument, OverlayStyle, RenderError};
pub use raster::{ImageError, Mask, RasterImage};
