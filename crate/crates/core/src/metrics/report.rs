use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::answers::answers_match;
use super::detection::{ap50, shape_predictions, ClassBoxes};
use super::dilation::{dilation_accuracy_fields, PartField, DILATION_RADII};
use super::markers::{marker_accuracy, text_markers};
use super::points::{ordering_errors, rmse_closest, stroke_segments, stroke_vertices};
use crate::batch::par_map;
use crate::forge::{GroundTruth, TaskInstance, TaskKind};
use crate::stroke::{AnnotationSet, CoordinateFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Scored,
    /// The run produced no annotation (gateway or parse failure).
    Failed,
}

/// Per-instance scores. Metrics that could not be computed are listed in
/// `not_scored` and excluded from aggregates instead of being penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub kind: TaskKind,
    pub status: RecordStatus,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub not_scored: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// `None` when no instance produced a value.
    pub mean: Option<f64>,
    pub count: usize,
    /// Population standard deviation over instances.
    pub std: f64,
    /// `std / sqrt(count)`; equals the binomial standard error for 0/1 metrics.
    pub stderr: f64,
    /// Instances where the metric applied but could not be computed.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub config_hash: String,
    pub tool_version: String,
    pub records: Vec<InstanceRecord>,
    pub aggregate: BTreeMap<String, Aggregate>,
}

/// What the scorer needs for one instance.
#[derive(Debug, Clone, Copy)]
pub struct ScoreInput<'a> {
    pub instance: &'a TaskInstance,
    pub annotation: Option<&'a AnnotationSet>,
    /// Frame the annotation's coordinates are expressed in.
    pub frame: &'a CoordinateFrame,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn radius_key(prefix: &str, r: f64) -> String {
    format!("{prefix}_r{:02}", r as u32)
}

pub fn score_instance(input: ScoreInput<'_>) -> InstanceRecord {
    let inst = input.instance;
    let mut rec = InstanceRecord {
        id: inst.id.clone(),
        kind: inst.kind,
        status: RecordStatus::Scored,
        metrics: BTreeMap::new(),
        not_scored: vec![],
        notes: vec![],
    };
    let Some(set) = input.annotation else {
        rec.status = RecordStatus::Failed;
        return rec;
    };
    let dims = (inst.image.width, inst.image.height);
    let frame = input.frame;

    if let Some(truth) = &inst.answer {
        match &set.final_answer {
            Some(a) => {
                rec.metrics.insert("answer_correct".into(), flag(answers_match(a, truth)));
            }
            None => {
                rec.metrics.insert("answer_correct".into(), 0.0);
                rec.notes.push("no final answer".into());
            }
        }
    }

    match &inst.truth {
        GroundTruth::Dots(gt) => {
            let pred: Vec<_> = stroke_vertices(set, frame, dims).into_iter().flatten().collect();
            match rmse_closest(&gt.points, &pred) {
                Ok(v) => {
                    rec.metrics.insert("rmse".into(), v);
                }
                Err(_) => rec.not_scored.push("rmse".into()),
            }
            if let Ok(o) = ordering_errors(&gt.points, &stroke_segments(set, frame, dims)) {
                rec.metrics.insert("ordering_errors".into(), o.errors as f64);
                rec.metrics.insert("ordering_error_rate".into(), o.rate);
                rec.metrics.insert("extra_segments".into(), o.extra as f64);
            }
        }
        GroundTruth::Count { boxes, .. } => {
            let m = marker_accuracy(boxes, &text_markers(set, frame, dims));
            rec.metrics.insert("marker_location_acc".into(), m.location_acc);
            rec.metrics.insert("marker_count_correct".into(), flag(m.count_correct));
        }
        GroundTruth::Shapes { classes } => {
            let gts: Vec<ClassBoxes> = classes.iter().map(|c| ClassBoxes { name: c.name.clone(), boxes: c.boxes.clone() }).collect();
            let default = classes.first().map(|c| c.name.as_str()).unwrap_or("");
            let r = ap50(&shape_predictions(set, frame, dims, default), &gts);
            for (k, v) in [("ap50", r.all), ("ap50_small", r.small), ("ap50_medium", r.medium), ("ap50_large", r.large)] {
                if let Some(v) = v {
                    rec.metrics.insert(k.into(), v);
                }
            }
        }
        GroundTruth::Label { parts, .. } => {
            let fields: Vec<PartField> = parts.iter().map(|p| PartField::new(p, dims)).collect();
            let labels = text_markers(set, frame, dims);
            for r in DILATION_RADII {
                let d = dilation_accuracy_fields(&labels, &fields, r);
                rec.metrics.insert(radius_key("label_acc", r), d.accuracy);
                rec.metrics.insert(radius_key("wrong_position_rate", r), d.wrong_position_rate);
                if r == 0.0 {
                    rec.metrics.insert("missing_label_rate".into(), d.missing_label_rate);
                    rec.notes.extend(d.unknown_names.iter().map(|n| format!("unknown part name {n:?}")));
                }
            }
        }
        GroundTruth::Maze(_) | GroundTruth::Ball(_) | GroundTruth::Free => {}
    }
    rec
}

/// Metric names each kind is expected to produce when its prediction exists.
fn expected_metrics(inst: &TaskInstance) -> Vec<&'static str> {
    let mut v = vec![];
    if inst.answer.is_some() {
        v.push("answer_correct");
    }
    if inst.kind == TaskKind::ConnectDots {
        v.push("rmse");
    }
    v
}

impl MetricReport {
    /// Builds the aggregate table from records; identical input gives an
    /// identical report regardless of how records were computed.
    pub fn from_records(run_id: &str, config_hash: &str, records: Vec<InstanceRecord>, instances: &[TaskInstance]) -> Self {
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut failures: BTreeMap<String, usize> = BTreeMap::new();
        for (rec, inst) in records.iter().zip(instances) {
            for (k, v) in &rec.metrics {
                values.entry(k.clone()).or_default().push(*v);
            }
            let missing: Vec<String> = match rec.status {
                RecordStatus::Failed => expected_metrics(inst).iter().map(|s| s.to_string()).collect(),
                RecordStatus::Scored => rec.not_scored.clone(),
            };
            for k in missing {
                *failures.entry(k).or_default() += 1;
            }
        }
        let mut keys: BTreeSet<String> = values.keys().cloned().collect();
        keys.extend(failures.keys().cloned());
        let aggregate = keys
            .into_iter()
            .map(|k| {
                let xs = values.get(&k).cloned().unwrap_or_default();
                let agg = aggregate_of(&xs, failures.get(&k).copied().unwrap_or(0));
                (k, agg)
            })
            .collect();
        MetricReport {
            run_id: run_id.into(),
            config_hash: config_hash.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            records,
            aggregate,
        }
    }

    /// Union of metric names over all records, sorted.
    pub fn metric_columns(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.records.iter().flat_map(|r| r.metrics.keys()).collect();
        set.into_iter().cloned().collect()
    }

    /// Per-instance table: `id,kind,status,<metrics…>`; blank cells mean
    /// "not applicable or not scored".
    pub fn to_csv(&self) -> String {
        let cols = self.metric_columns();
        let mut w = csv::Writer::from_writer(vec![]);
        let mut header = vec!["id".to_string(), "kind".into(), "status".into()];
        header.extend(cols.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for r in &self.records {
            let mut row = vec![r.id.clone(), enum_name(&r.kind), enum_name(&r.status)];
            row.extend(cols.iter().map(|c| r.metrics.get(c).map(|v| format_value(*v)).unwrap_or_default()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Aggregate JSON with provenance; records are left to the CSV.
    pub fn aggregate_json(&self) -> String {
        let v = serde_json::json!({
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "instances": self.records.len(),
            "failed_instances": self.records.iter().filter(|r| r.status == RecordStatus::Failed).count(),
            "aggregate": self.aggregate,
        });
        let mut s = serde_json::to_string_pretty(&v).expect("serializable");
        s.push('\n');
        s
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn format_value(v: f64) -> String {
    // Shortest round-trip representation keeps the CSV reproducible.
    format!("{v}")
}

pub fn aggregate_of(xs: &[f64], failures: usize) -> Aggregate {
    let n = xs.len();
    if n == 0 {
        return Aggregate { mean: None, count: 0, std: 0.0, stderr: 0.0, failures };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    Aggregate { mean: Some(mean), count: n, std, stderr: std / (n as f64).sqrt(), failures }
}

/// Scores every input in parallel; records come back in input order.
pub fn score_instances(inputs: &[ScoreInput<'_>]) -> Vec<InstanceRecord> {
    par_map(inputs, |i| score_instance(*i))
}

/// SHA-256 of the canonical (key-sorted, compact) JSON form of a config.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let v = serde_json::to_value(config).expect("config serializes");
    let canonical = serde_json::to_string(&v).expect("value serializes");
    crate::render::raster::hex(&Sha256::digest(canonical.as_bytes()))
}
