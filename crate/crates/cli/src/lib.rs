//! `strokelab` command line.
//!
//! Exit codes: 0 success, 1 some instances failed, 2 configuration or
//! schema error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use strokelab_core::agreement::{agreement_stats, mean_std, AgreementStats};
use strokelab_core::batch::{forge_instances, par_map, with_jobs, ForgeKind};
use strokelab_core::forge::draw::render_task_image;
use strokelab_core::forge::manifest::{load_manifest, manifest_dir};
use strokelab_core::forge::{write_dataset, GroundTruth, TaskInstance};
use strokelab_core::prompting::{PromptConfig, Rubric, SessionMode};
use strokelab_core::render::{composite, render_overlay, OverlayStyle, RasterImage};
use strokelab_core::stroke::{parse_annotation, AnnotationSet, CoordinateFrame, Origin};
use strokelab_engine::gateway::AuditLog;
use strokelab_engine::judge::{align_rate, judge_alignment, judge_quality, JudgeError, VerdictRecord};
use strokelab_engine::oracle::oracle_model;
use strokelab_engine::run::{eval_run, file_stem, read_annotation, read_descriptor, run_manifest, write_report, RunConfig, TOOL_VERSION};
use strokelab_engine::{ChatModel, GatewayError, ProviderRegistry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Built-in provider that answers with each instance's ground truth.
pub const ORACLE_PROVIDER: &str = "oracle";

#[derive(Debug, Parser)]
#[command(name = "strokelab", version, about = "Turn vision-language models into image annotators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (images + manifest.json).
    Forge(ForgeArgs),
    /// Annotate every manifest instance with a model.
    Run(RunArgs),
    /// Score a run directory against its manifest.
    Eval(EvalArgs),
    /// Ask a judge model to rate or interpret a run's annotations.
    Judge(JudgeArgs),
    /// Agreement between two rating files.
    Agree(AgreeArgs),
    /// Render an annotation over an image as SVG or PNG.
    Render(RenderArgs),
    /// Start the HTTP annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ForgeArgs {
    /// dots, outline, maze or balldrop.
    pub kind: ForgeKind,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Provider name: `oracle` or one defined in `--providers`.
    #[arg(long, default_value = ORACLE_PROVIDER)]
    pub provider: String,
    /// JSON array of provider configurations.
    #[arg(long)]
    pub providers: Option<PathBuf>,
    /// Overlay a labelled grid on images sent to the model (default).
    #[arg(long, overrides_with = "no_grid")]
    pub grid: bool,
    #[arg(long)]
    pub no_grid: bool,
    /// One request per instance (default).
    #[arg(long, overrides_with = "multi")]
    pub single: bool,
    /// One stroke per turn with rendered feedback.
    #[arg(long)]
    pub multi: bool,
    /// Plain question answering without the sketching prompt.
    #[arg(long)]
    pub no_sketch: bool,
    /// `grid:WxH[:origin]` or `normalized:S[:origin]`, origin `bottom-left` or `top-left`.
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long, default_value_t = strokelab_engine::session::DEFAULT_MAX_TURNS)]
    pub max_turns: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    /// Skip instances that already have a valid annotation.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub run_dir: PathBuf,
    /// Defaults to the manifest recorded in `run.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// 1–5 rubric score of annotation quality (maze and ball-drop items).
    Quality,
    /// Which answer the annotations alone indicate.
    Alignment,
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    pub run_dir: PathBuf,
    #[arg(long, value_enum)]
    pub protocol: Protocol,
    #[arg(long)]
    pub provider: String,
    #[arg(long)]
    pub providers: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct AgreeArgs {
    /// Ratings 1–5: a JSON array or whitespace-separated integers.
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A run's `.anno.json`, or raw annotation text (needs `--frame`).
    pub annotation: PathBuf,
    pub image: PathBuf,
    /// Output path; `.svg` writes the overlay, anything else a composited PNG.
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub frame: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
    #[arg(long, default_value = "studio-data")]
    pub data: PathBuf,
    #[arg(long)]
    pub providers: Option<PathBuf>,
    /// Built studio assets to serve at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    #[arg(long)]
    pub cors_origin: Option<String>,
}

/// Parses `grid:WxH[:origin]` or `normalized:S[:origin]`.
pub fn parse_frame(s: &str) -> anyhow::Result<CoordinateFrame> {
    let mut parts = s.split(':');
    let kind = parts.next().unwrap_or_default();
    let size = parts.next().ok_or_else(|| anyhow!("frame {s:?} needs a size"))?;
    let origin = match parts.next() {
        None | Some("bottom-left") => Origin::BottomLeft,
        Some("top-left") => Origin::TopLeft,
        Some(o) => bail!("unknown origin {o:?} (bottom-left, top-left)"),
    };
    if parts.next().is_some() {
        bail!("frame {s:?} has too many fields");
    }
    let frame = match kind {
        "grid" => {
            let (w, h) = size.split_once('x').ok_or_else(|| anyhow!("grid size must be WxH"))?;
            CoordinateFrame::grid(w.parse()?, h.parse()?, origin)
        }
        "normalized" => CoordinateFrame::normalized(size.parse()?, origin),
        _ => bail!("unknown frame kind {kind:?} (grid, normalized)"),
    };
    frame.map_err(|e| anyhow!("{e}"))
}

impl RunArgs {
    pub fn prompt(&self) -> anyhow::Result<PromptConfig> {
        let mut cfg = PromptConfig::default();
        if let Some(f) = &self.frame {
            cfg.frame = parse_frame(f)?;
        }
        cfg.grid_enabled = !self.no_grid;
        cfg.mode = if self.multi { SessionMode::Stepwise } else { SessionMode::SingleTurn };
        cfg.sketch_enabled = !self.no_sketch;
        cfg.check().map_err(|e| anyhow!("{e}"))?;
        Ok(cfg)
    }
}

fn load_registry(path: Option<&Path>, audit: Arc<AuditLog>) -> anyhow::Result<ProviderRegistry> {
    match path {
        None => Ok(ProviderRegistry::new()),
        Some(p) => {
            let cfgs = ProviderRegistry::load_configs(p)?;
            Ok(ProviderRegistry::from_configs(&cfgs, audit)?)
        }
    }
}

/// Parses, dispatches and maps errors to exit codes.
pub fn main_with<I: IntoIterator<Item = T>, T: Into<OsString> + Clone>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .try_init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<i32> {
    match cmd {
        Command::Forge(a) => cmd_forge(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Judge(a) => cmd_judge(&a),
        Command::Agree(a) => cmd_agree(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Serve(a) => cmd_serve(&a),
    }
}

fn cmd_forge(a: &ForgeArgs) -> anyhow::Result<i32> {
    let instances = forge_instances(a.kind, a.count, a.seed).map_err(|e| anyhow!(e))?;
    let (m, sha) = write_dataset(&a.out, instances)?;
    println!("{}", serde_json::json!({ "manifest": a.out.join("manifest.json"), "instances": m.instances.len(), "sha256": sha }));
    Ok(EXIT_OK)
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<i32> {
    let prompt = a.prompt()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let audit = Arc::new(AuditLog::to_file(&a.out.join("audit.jsonl")));
    let registry = load_registry(a.providers.as_deref(), audit)?;
    let mut rc = RunConfig::new(&a.provider, prompt.clone(), &a.manifest, &a.out);
    rc.seed = a.seed;
    rc.jobs = a.jobs.max(1);
    rc.max_turns = a.max_turns;
    rc.resume = a.resume;
    let desc = if a.provider == ORACLE_PROVIDER {
        let stepwise = prompt.mode == SessionMode::Stepwise;
        let frame = prompt.frame;
        run_manifest(&rc, &move |inst: &TaskInstance| Ok(Arc::new(oracle_model(inst, &frame, stepwise)) as Arc<dyn ChatModel>))?
    } else {
        let model = registry.get(&a.provider).ok_or_else(|| anyhow!("provider {:?} is not configured", a.provider))?;
        run_manifest(&rc, &move |_: &TaskInstance| Ok::<_, GatewayError>(model.clone()))?
    };
    let failed = desc.failed();
    println!(
        "{}",
        serde_json::json!({ "run_id": desc.run_id, "instances": desc.instances.len(), "failed": failed, "out": a.out })
    );
    Ok(if failed == 0 { EXIT_OK } else { EXIT_PARTIAL })
}

fn manifest_for(run_dir: &Path, explicit: Option<&Path>) -> anyhow::Result<PathBuf> {
    match explicit {
        Some(p) => Ok(p.to_path_buf()),
        None => Ok(read_descriptor(run_dir)?.manifest),
    }
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<i32> {
    let manifest = manifest_for(&a.run_dir, a.manifest.as_deref())?;
    let report = eval_run(&a.run_dir, &manifest)?;
    let (csv, json) = write_report(&a.run_dir, &report)?;
    eprintln!("wrote {} and {}", csv.display(), json.display());
    println!("{}", report.aggregate_json());
    Ok(EXIT_OK)
}

/// Summary written next to a run's verdict log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeSummary {
    pub run_id: String,
    pub config_hash: String,
    pub tool_version: String,
    pub protocol: Protocol,
    pub judge: String,
    pub judged: usize,
    pub failures: usize,
    /// Mean and population std of quality scores.
    pub score_mean: Option<f64>,
    pub score_std: Option<f64>,
    /// Fraction of instances whose inferred answer matches the model's.
    pub align_rate: Option<f64>,
}

fn quality_rubric(inst: &TaskInstance) -> Option<(Rubric, Option<String>)> {
    match &inst.truth {
        GroundTruth::Ball(_) => Some((Rubric::BallPhysics, None)),
        GroundTruth::Maze(m) => Some((Rubric::MazeNav, Some(m.path_text()))),
        _ => None,
    }
}

/// Judges every annotated instance of a run and writes
/// `judge_<protocol>.jsonl` plus `judge_<protocol>.json`.
pub fn judge_run(run_dir: &Path, manifest_path: &Path, protocol: Protocol, judge: &dyn ChatModel, jobs: usize) -> anyhow::Result<JudgeSummary> {
    let desc = read_descriptor(run_dir)?;
    let manifest = load_manifest(manifest_path)?;
    let base_dir = manifest_dir(manifest_path);
    let selected: Vec<&TaskInstance> = manifest
        .instances
        .iter()
        .filter(|i| protocol == Protocol::Alignment || quality_rubric(i).is_some())
        .collect();
    let tag = match protocol {
        Protocol::Quality => "quality",
        Protocol::Alignment => "alignment",
    };
    let judged = with_jobs(jobs.max(1), || {
        par_map(&selected, |inst| {
            let stem = file_stem(&inst.id);
            let inst_dir = run_dir.join(strokelab_engine::run::INSTANCE_DIR);
            let record = |verdict, error: Option<String>| VerdictRecord { instance_id: inst.id.clone(), protocol: tag.into(), verdict, error };
            let anno = match read_annotation(&inst_dir.join(format!("{stem}.anno.json"))) {
                Ok(a) => a,
                Err(e) => return (record(None, Some(format!("no annotation: {e}"))), None),
            };
            let annotated = match std::fs::read(inst_dir.join(format!("{stem}.png"))).map_err(|e| e.to_string()).and_then(|b| RasterImage::decode(&b).map_err(|e| e.to_string())) {
                Ok(img) => img,
                Err(e) => return (record(None, Some(format!("no annotated image: {e}"))), None),
            };
            let result = match protocol {
                Protocol::Quality => {
                    let (rubric, path) = quality_rubric(inst).expect("filtered to rubric kinds");
                    match render_task_image(inst, Some(&base_dir)) {
                        Ok(original) => judge_quality(judge, &original, &annotated, rubric, path.as_deref()),
                        Err(e) => return (record(None, Some(format!("original image: {e}"))), None),
                    }
                }
                Protocol::Alignment => judge_alignment(judge, &annotated, &inst.question),
            };
            match result {
                Ok(v) => (record(Some(v), None), Some(anno.annotation.final_answer)),
                Err(JudgeError::ScoreParseFailure { raw }) => (record(None, Some(format!("unparseable score: {raw}"))), None),
                Err(e) => (record(None, Some(e.to_string())), None),
            }
        })
    });
    let mut lines = String::new();
    for (rec, _) in &judged {
        lines.push_str(&serde_json::to_string(rec)?);
        lines.push('\n');
    }
    std::fs::write(run_dir.join(format!("judge_{tag}.jsonl")), lines)?;
    let ok: Vec<_> = judged.iter().filter(|(r, _)| r.verdict.is_some()).collect();
    let (score_mean, score_std) = match mean_std(ok.iter().map(|(r, _)| r.verdict.as_ref().and_then(|v| v.score).map(f64::from))) {
        Some((m, s)) if protocol == Protocol::Quality => (Some(m), Some(s)),
        _ => (None, None),
    };
    let align = match protocol {
        Protocol::Alignment => {
            let inferred: Vec<_> = ok.iter().map(|(r, _)| r.verdict.as_ref().and_then(|v| v.inferred_answer.clone())).collect();
            let answers: Vec<_> = ok.iter().map(|(_, a)| a.clone().flatten()).collect();
            align_rate(&inferred, &answers)
        }
        Protocol::Quality => None,
    };
    let summary = JudgeSummary {
        run_id: desc.run_id,
        config_hash: desc.config_hash,
        tool_version: TOOL_VERSION.into(),
        protocol,
        judge: judge.name().to_owned(),
        judged: ok.len(),
        failures: judged.len() - ok.len(),
        score_mean,
        score_std,
        align_rate: align,
    };
    std::fs::write(run_dir.join(format!("judge_{tag}.json")), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}

fn cmd_judge(a: &JudgeArgs) -> anyhow::Result<i32> {
    let audit = Arc::new(AuditLog::to_file(&a.run_dir.join("judge_audit.jsonl")));
    let registry = load_registry(Some(&a.providers), audit)?;
    let model = registry.get(&a.provider).ok_or_else(|| anyhow!("provider {:?} is not configured", a.provider))?;
    let manifest = manifest_for(&a.run_dir, a.manifest.as_deref())?;
    let summary = judge_run(&a.run_dir, &manifest, a.protocol, model.as_ref(), a.jobs)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if summary.failures == 0 { EXIT_OK } else { EXIT_PARTIAL })
}

/// Reads 1–5 ratings from a JSON array or whitespace-separated integers.
pub fn read_ratings(path: &Path) -> anyhow::Result<Vec<u8>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("{} is not a JSON array of ratings", path.display()));
    }
    text.split_whitespace()
        .map(|t| t.parse::<u8>().with_context(|| format!("{}: bad rating {t:?}", path.display())))
        .collect()
}

fn cmd_agree(a: &AgreeArgs) -> anyhow::Result<i32> {
    let stats: AgreementStats = agreement_stats(&read_ratings(&a.a)?, &read_ratings(&a.b)?)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(EXIT_OK)
}

/// Loads an annotation either from a run's `.anno.json` (which carries its
/// frame) or from raw annotation text with an explicit frame.
pub fn load_annotation(path: &Path, frame: Option<&str>) -> anyhow::Result<(AnnotationSet, CoordinateFrame)> {
    if let Ok(f) = read_annotation(path) {
        let frame = match frame {
            Some(s) => parse_frame(s)?,
            None => f.frame,
        };
        return Ok((f.annotation, frame));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let set = parse_annotation(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let frame = frame.ok_or_else(|| anyhow!("raw annotation text needs --frame"))?;
    Ok((set, parse_frame(frame)?))
}

fn cmd_render(a: &RenderArgs) -> anyhow::Result<i32> {
    let (set, frame) = load_annotation(&a.annotation, a.frame.as_deref())?;
    let bytes = std::fs::read(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let img = RasterImage::decode(&bytes)?;
    let (w, h) = img.dims();
    let doc = render_overlay(&set, &frame, w, h, &OverlayStyle::default())?;
    let is_svg = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg"));
    if is_svg {
        std::fs::write(&a.out, doc.to_svg())?;
    } else {
        std::fs::write(&a.out, composite(&img, &doc)?.to_png()?)?;
    }
    println!("{}", serde_json::json!({ "out": a.out, "layers": doc.layers.len() }));
    Ok(EXIT_OK)
}

fn cmd_serve(a: &ServeArgs) -> anyhow::Result<i32> {
    std::fs::create_dir_all(&a.data)?;
    let audit = Arc::new(AuditLog::to_file(&a.data.join("audit.jsonl")));
    let registry = load_registry(a.providers.as_deref(), audit)?;
    let cfg = strokelab_service::ServiceConfig { data_dir: a.data.clone(), static_dir: a.static_dir.clone(), cors_origin: a.cors_origin.clone() };
    let state = Arc::new(strokelab_service::AppState::open(cfg, registry)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(strokelab_service::serve(a.addr, state))?;
    Ok(EXIT_OK)
}
