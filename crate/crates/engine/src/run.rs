//! Manifest batch runs and their evaluation.
//!
//! A run directory holds `run.json` plus, per instance, under `instances/`:
//! `<id>.anno.json` (written last, so its presence marks completion),
//! `<id>.overlay.svg`, `<id>.png` (composite) and `<id>.transcript.jsonl`
//! (session event log). Failed instances leave `<id>.error.json` instead.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use strokelab_core::batch::{par_map, with_jobs};
use strokelab_core::forge::manifest::manifest_dir;
use strokelab_core::forge::{load_manifest, render_task_image, Manifest, TaskInstance};
use strokelab_core::metrics::{config_hash, score_instances, MetricReport, ScoreInput};
use strokelab_core::prompting::{PromptConfig, SessionMode};
use strokelab_core::render::composite;
use strokelab_core::stroke::{AnnotationSet, CoordinateFrame};

use crate::gateway::{sha256_hex, ChatModel, GatewayError};
use crate::oracle::task_prompt;
use crate::session::{Session, SessionError, SessionOptions, SessionStatus, DEFAULT_MAX_TURNS};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RUN_FILE: &str = "run.json";
pub const INSTANCE_DIR: &str = "instances";

/// Everything that determines a run's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub provider: String,
    pub prompt: PromptConfig,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub max_turns: usize,
    pub resume: bool,
}

impl RunConfig {
    pub fn new(provider: &str, prompt: PromptConfig, manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            provider: provider.into(),
            prompt,
            manifest: manifest.into(),
            out_dir: out_dir.into(),
            seed: 0,
            jobs: 4,
            max_turns: DEFAULT_MAX_TURNS,
            resume: false,
        }
    }
}

/// The result-relevant part of a run config, hashed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashedConfig {
    pub provider: String,
    pub prompt: PromptConfig,
    pub manifest_sha256: String,
    pub seed: u64,
    pub max_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceStatus {
    Done,
    Failed,
}

/// Per-instance annotation artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub instance_id: String,
    pub frame: CoordinateFrame,
    pub dims: (u32, u32),
    pub turns: usize,
    pub annotation: AnnotationSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub status: InstanceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub turns: usize,
    pub skipped: bool,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDescriptor {
    pub run_id: String,
    pub config_hash: String,
    pub tool_version: String,
    pub config: HashedConfig,
    pub manifest: PathBuf,
    pub jobs: usize,
    pub instances: Vec<InstanceOutcome>,
}

impl RunDescriptor {
    pub fn failed(&self) -> usize {
        self.instances.iter().filter(|o| o.status == InstanceStatus::Failed).count()
    }

    pub fn all_failed(&self) -> bool {
        !self.instances.is_empty() && self.failed() == self.instances.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("manifest: {0}")]
    Manifest(#[from] strokelab_core::forge::ManifestError),
    #[error("invalid prompt config: {0}")]
    Prompt(#[from] strokelab_core::prompting::PromptError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Schema { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.display().to_string(), source }
}

/// Builds the model used for one instance.
pub type ModelFactory<'a> = dyn Fn(&TaskInstance) -> Result<Arc<dyn ChatModel>, GatewayError> + Send + Sync + 'a;

/// File stem safe for any instance id.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn hashed_config(cfg: &RunConfig, manifest_json: &[u8]) -> HashedConfig {
    HashedConfig {
        provider: cfg.provider.clone(),
        prompt: cfg.prompt.clone(),
        manifest_sha256: sha256_hex(manifest_json),
        seed: cfg.seed,
        max_turns: cfg.max_turns,
    }
}

fn run_instance(cfg: &RunConfig, inst: &TaskInstance, base_dir: &Path, dir: &Path, factory: &ModelFactory<'_>) -> InstanceOutcome {
    let stem = file_stem(&inst.id);
    let anno_path = dir.join(format!("{stem}.anno.json"));
    if cfg.resume {
        if let Ok(text) = std::fs::read_to_string(&anno_path) {
            if let Ok(a) = serde_json::from_str::<AnnotationFile>(&text) {
                return InstanceOutcome { id: inst.id.clone(), status: InstanceStatus::Done, error: None, turns: a.turns, skipped: true };
            }
        }
    }
    let error_path = dir.join(format!("{stem}.error.json"));
    let _ = std::fs::remove_file(&error_path);
    let transcript = dir.join(format!("{stem}.transcript.jsonl"));
    let _ = std::fs::remove_file(&transcript);
    let fail = |msg: String, turns: usize| {
        let body = serde_json::json!({ "instance_id": inst.id, "error": msg });
        let _ = std::fs::write(&error_path, serde_json::to_vec_pretty(&body).expect("json"));
        InstanceOutcome { id: inst.id.clone(), status: InstanceStatus::Failed, error: Some(msg), turns, skipped: false }
    };
    let result = (|| -> Result<Session, (String, usize, Option<Session>)> {
        let base = render_task_image(inst, Some(base_dir)).map_err(|e| (e.to_string(), 0, None))?;
        let model = factory(inst).map_err(|e| (e.to_string(), 0, None))?;
        let opts = SessionOptions { max_turns: cfg.max_turns, event_log: Some(transcript.clone()), ..Default::default() };
        let mut s = Session::new(inst.id.clone(), base, cfg.prompt.clone(), task_prompt(inst), opts).map_err(|e| (e.to_string(), 0, None))?;
        match s.run(model.as_ref()) {
            Ok(_) => Ok(s),
            Err(e) => {
                let n = s.turns.len();
                Err((e.to_string(), n, Some(s)))
            }
        }
    })();
    let session = match result {
        Ok(s) => s,
        Err((msg, turns, _)) => return fail(msg, turns),
    };
    debug_assert_eq!(session.status, SessionStatus::Done);
    let overlay = session.overlay();
    let png = match composite(session.base_image(), &overlay).map_err(|e| e.to_string()).and_then(|img| img.to_png().map_err(|e| e.to_string())) {
        Ok(p) => p,
        Err(e) => return fail(e, session.turns.len()),
    };
    let file = AnnotationFile {
        instance_id: inst.id.clone(),
        frame: cfg.prompt.frame,
        dims: session.base_image().dims(),
        turns: session.turns.len(),
        annotation: session.annotation(),
    };
    let writes = [
        (dir.join(format!("{stem}.overlay.svg")), overlay.to_svg().into_bytes()),
        (dir.join(format!("{stem}.png")), png),
        (anno_path, serde_json::to_vec_pretty(&file).expect("annotation serializes")),
    ];
    for (p, bytes) in writes {
        if let Err(e) = write_atomic(&p, &bytes) {
            return fail(e.to_string(), session.turns.len());
        }
    }
    InstanceOutcome { id: inst.id.clone(), status: InstanceStatus::Done, error: None, turns: session.turns.len(), skipped: false }
}

/// Runs every manifest instance through a session and writes the run
/// directory. Instance failures are recorded, never fatal.
pub fn run_manifest(cfg: &RunConfig, factory: &ModelFactory<'_>) -> Result<RunDescriptor, RunError> {
    cfg.prompt.check()?;
    let manifest_json = std::fs::read(&cfg.manifest).map_err(io_err(&cfg.manifest))?;
    let manifest: Manifest = load_manifest(&cfg.manifest)?;
    let base_dir = manifest_dir(&cfg.manifest);
    let dir = cfg.out_dir.join(INSTANCE_DIR);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let hashed = hashed_config(cfg, &manifest_json);
    let hash = config_hash(&hashed);
    let outcomes = with_jobs(cfg.jobs.max(1), || par_map(&manifest.instances, |inst| run_instance(cfg, inst, &base_dir, &dir, factory)));
    let desc = RunDescriptor {
        run_id: hash[..12].to_owned(),
        config_hash: hash,
        tool_version: TOOL_VERSION.to_owned(),
        config: hashed,
        manifest: cfg.manifest.clone(),
        jobs: cfg.jobs,
        instances: outcomes,
    };
    let run_path = cfg.out_dir.join(RUN_FILE);
    write_atomic(&run_path, &serde_json::to_vec_pretty(&desc).expect("descriptor serializes"))?;
    Ok(desc)
}

pub fn read_descriptor(run_dir: &Path) -> Result<RunDescriptor, RunError> {
    let p = run_dir.join(RUN_FILE);
    let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
    serde_json::from_str(&text).map_err(|e| RunError::Schema { path: p.display().to_string(), reason: e.to_string() })
}

pub fn read_annotation(path: &Path) -> Result<AnnotationFile, RunError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Schema { path: path.display().to_string(), reason: e.to_string() })
}

/// Scores a run directory against its manifest. Instances without an
/// annotation file are scored as failures.
pub fn eval_run(run_dir: &Path, manifest_path: &Path) -> Result<MetricReport, RunError> {
    let desc = read_descriptor(run_dir)?;
    let manifest = load_manifest(manifest_path)?;
    let dir = run_dir.join(INSTANCE_DIR);
    let mut annos: BTreeMap<String, AnnotationFile> = BTreeMap::new();
    for inst in &manifest.instances {
        let p = dir.join(format!("{}.anno.json", file_stem(&inst.id)));
        if p.exists() {
            let a = read_annotation(&p)?;
            if a.instance_id != inst.id {
                return Err(RunError::Schema { path: p.display().to_string(), reason: format!("instance id {} != {}", a.instance_id, inst.id) });
            }
            annos.insert(inst.id.clone(), a);
        }
    }
    let default_frame = desc.config.prompt.frame;
    let inputs: Vec<ScoreInput<'_>> = manifest
        .instances
        .iter()
        .map(|inst| {
            let a = annos.get(&inst.id);
            ScoreInput { instance: inst, annotation: a.map(|a| &a.annotation), frame: a.map_or(&default_frame, |a| &a.frame) }
        })
        .collect();
    let records = score_instances(&inputs);
    Ok(MetricReport::from_records(&desc.run_id, &desc.config_hash, records, &manifest.instances))
}

/// Writes `report.csv` and `report.json` into the run directory.
pub fn write_report(run_dir: &Path, report: &MetricReport) -> Result<(PathBuf, PathBuf), RunError> {
    let csv = run_dir.join("report.csv");
    let json = run_dir.join("report.json");
    write_atomic(&csv, report.to_csv().as_bytes())?;
    write_atomic(&json, report.aggregate_json().as_bytes())?;
    Ok((csv, json))
}

/// Whether a prompt config is stepwise.
pub fn is_stepwise(cfg: &PromptConfig) -> bool {
    cfg.mode == SessionMode::Stepwise
}

/// Rejects session errors the runner cannot recover from (used by callers
/// that drive sessions directly).
pub fn is_resumable(e: &SessionError) -> bool {
    matches!(e, SessionError::Gateway(_))
}
