//! Benchmark generators, ground-truth types and dataset manifests.

pub mod ball;
pub mod dots;
pub mod draw;
pub mod manifest;
pub mod maze;
pub mod outline;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::{PixelPoint, PixelRect};

pub use ball::{gen_ball_drop, simulate_ball, BallScene, PhysicsParams, SimError, Simulation};
pub use dots::{gen_random_dots, DotsError};
pub use draw::{render_task_image, DrawError};
pub use manifest::{load_manifest, write_dataset, Manifest, ManifestError, SCHEMA_VERSION};
pub use maze::{gen_maze, walk_maze, Dir, MazeGt, WalkOutcome};
pub use outline::{gen_outline_dots, OutlineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ConnectDots,
    Maze,
    BallDrop,
    Counting,
    Shapes,
    PartLabel,
    FreeVqa,
}

/// Where an instance's image lives, relative to its manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub path: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DotsGt {
    /// Dot centers in connection order.
    pub points: Vec<PixelPoint>,
    pub labels: Vec<u32>,
    /// Where each numeral is drawn (beside its dot).
    pub label_anchors: Vec<PixelPoint>,
    pub dot_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallGt {
    pub trajectory: Vec<PixelPoint>,
    /// 1-based, left to right.
    pub container: u32,
    pub scene: BallScene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    /// COCO area thresholds: small < 32², medium < 96², large otherwise.
    pub fn of_area(area: f64) -> Self {
        if area < 32.0 * 32.0 {
            SizeBucket::Small
        } else if area < 96.0 * 96.0 {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeClass {
    pub name: String,
    pub boxes: Vec<PixelRect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRegion {
    pub name: String,
    /// Closed polygon in image pixels.
    pub polygon: Vec<PixelPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Dots(DotsGt),
    Maze(MazeGt),
    Ball(BallGt),
    Count { object: String, boxes: Vec<PixelRect> },
    Shapes { classes: Vec<ShapeClass> },
    Label { concept: String, parts: Vec<PartRegion> },
    Free,
}

impl GroundTruth {
    pub fn kind(&self) -> Option<TaskKind> {
        Some(match self {
            GroundTruth::Dots(_) => TaskKind::ConnectDots,
            GroundTruth::Maze(_) => TaskKind::Maze,
            GroundTruth::Ball(_) => TaskKind::BallDrop,
            GroundTruth::Count { .. } => TaskKind::Counting,
            GroundTruth::Shapes { .. } => TaskKind::Shapes,
            GroundTruth::Label { .. } => TaskKind::PartLabel,
            GroundTruth::Free => return None,
        })
    }

    /// Every box mentioned by the truth payload.
    pub fn boxes(&self) -> Vec<PixelRect> {
        match self {
            GroundTruth::Count { boxes, .. } => boxes.clone(),
            GroundTruth::Shapes { classes } => classes.iter().flat_map(|c| c.boxes.iter().copied()).collect(),
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub kind: TaskKind,
    pub image: ImageRef,
    pub question: String,
    /// Expected final answer, when the task has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub truth: GroundTruth,
}

impl TaskInstance {
    /// Whether the truth payload matches the declared kind.
    pub fn is_consistent(&self) -> bool {
        match self.truth.kind() {
            Some(k) => k == self.kind,
            None => self.kind == TaskKind::FreeVqa,
        }
    }
}

/// Deterministic per-instance generator: stream `index` of the ChaCha8
/// sequence seeded with `seed`, so batches can be built in any order.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
