//! Scoring procedures for annotation runs.

pub mod answers;
pub mod detection;
pub mod dilation;
pub mod markers;
pub mod points;
pub mod report;

pub use answers::{answer_accuracy, answer_accuracy_with, answers_match, normalize_answer, Accuracy};
pub use detection::{ap50, ap50_in, average_precision, match_predictions, oval_to_bbox, shape_predictions, ApReport, AreaRange, ClassBoxes, IOU_THRESHOLD};
pub use dilation::{dilation_accuracy, dilation_accuracy_fields, squared_distance_field, DilationReport, PartField, DILATION_RADII};
pub use markers::{marker_accuracy, max_bipartite_matching, text_markers, MarkerReport};
pub use points::{ordering_errors, rmse_closest, segment_mse, stroke_segments, stroke_vertices, OrderingReport};
pub use report::{config_hash, score_instance, score_instances, Aggregate, InstanceRecord, MetricReport, RecordStatus, ScoreInput};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("ground truth is empty")]
    EmptyTruth,
    #[error("prediction is empty")]
    EmptyPrediction,
    #[error("length mismatch: {0} answers vs {1} truths")]
    LengthMismatch(usize, usize),
}
