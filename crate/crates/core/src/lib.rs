pub mod agreement;
pub mod batch;
pub mod color;
pub mod fit;
pub mod forge;
pub mod geom;
pub mod metrics;
pub mod prompting;
pub mod render;
pub mod stroke;
