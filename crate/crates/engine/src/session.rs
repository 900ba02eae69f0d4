//! Single-turn and stepwise annotation sessions.
//!
//! A session owns a base image, a prompt configuration and a task, and drives
//! a [`ChatModel`] through one of two protocols:
//!
//! * single turn: one request, the whole annotation set plus the answer;
//! * stepwise: one stroke per turn. Every request is self-contained: system
//!   prompt, the one-stroke guard, the task, the text of every stroke drawn so
//!   far and the image with those strokes composited on it. A turn with no
//!   stroke (or the turn budget running out) triggers one final turn that asks
//!   only for the answer.
//!
//! Every turn is appended to an event log; [`Session::replay`] rebuilds the
//! same state from it.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use strokelab_core::prompting::{build_system_prompt, build_task_prompt, stepwise_guards, PromptConfig, PromptError, SessionMode, TaskPrompt};
use strokelab_core::render::{composite, grid_augment, render_overlay, GridOptions, OverlayDocument, OverlayStyle, RasterImage, RenderError};
use strokelab_core::stroke::{parse_annotation, serialize_annotation, validate, AnnotationSet, CoordinateFrame, Dialect, ParseError, Stroke, Violation};

use crate::gateway::{ChatMessage, ChatModel, GatewayError, Part};

/// Default stepwise turn budget before the answer is forced.
pub const DEFAULT_MAX_TURNS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    AwaitingFinal,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnKind {
    /// Whole annotation and answer in one response.
    Single,
    /// One stroke (or none) in stepwise mode.
    Stroke,
    /// Answer-only turn closing a stepwise session.
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnFlag {
    /// The final turn was forced by the turn budget.
    TurnLimitExceeded,
    /// A stepwise response carried more strokes than allowed; extras dropped.
    ExtraStrokesDropped(usize),
    /// The response could not be parsed; the session failed.
    ParseFailure,
    /// The final turn produced no answer.
    MissingFinalAnswer,
    /// A fresh image replaced the base before this turn.
    ImageReplaced,
}

/// One protocol turn, exactly as sent and received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    /// 1-based.
    pub index: usize,
    pub kind: TurnKind,
    pub sent_image_sha256: String,
    pub sent_image_dims: (u32, u32),
    /// Every text part of the user message, joined with blank lines.
    pub sent_text: String,
    /// Serialized strokes drawn before this turn (empty on the first).
    pub sent_text_history: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_text: Option<String>,
    /// SHA-256 of an image injected before this turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injected_image_sha256: Option<String>,
    pub response: String,
    /// Strokes accepted this turn.
    pub delta: AnnotationSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<TurnFlag>,
}

impl TurnRecord {
    pub fn has_flag(&self, f: &TurnFlag) -> bool {
        self.flags.contains(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        id: String,
        cfg: PromptConfig,
        task: TaskPrompt,
        max_turns: usize,
        base_sha256: String,
        base_dims: (u32, u32),
    },
    Turn {
        record: TurnRecord,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("session is {0:?}; no further turns")]
    NotSteppable(SessionStatus),
    #[error("gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error("unparseable model response: {error}")]
    ParseFailure { error: ParseError, raw: String },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("event log: {0}")]
    Log(String),
}

/// Knobs that do not change the protocol itself.
#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub max_turns: usize,
    pub style: OverlayStyle,
    pub grid: GridOptions,
    pub event_log: Option<PathBuf>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self { max_turns: DEFAULT_MAX_TURNS, style: OverlayStyle::default(), grid: GridOptions::default(), event_log: None }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub cfg: PromptConfig,
    pub task: TaskPrompt,
    pub max_turns: usize,
    pub turns: Vec<TurnRecord>,
    pub status: SessionStatus,
    /// Strokes drawn on the current base image, in order.
    pub accumulated: AnnotationSet,
    pub final_answer: Option<String>,
    base: RasterImage,
    style: OverlayStyle,
    grid: GridOptions,
    event_log: Option<PathBuf>,
}

fn final_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)<final_answer>(.*?)</final_answer>").expect("static regex"))
}

/// The last `<final_answer>` in raw text, trimmed; `None` if absent or empty.
pub fn extract_final_answer(raw: &str) -> Option<String> {
    final_re().captures_iter(raw).last().map(|c| c[1].trim().to_owned()).filter(|s| !s.is_empty())
}

/// Makes a parsed set safe to accumulate: ids are made unique against
/// `taken` (suffix `_2`, `_3`, …) and strokes that cannot be rendered are
/// dropped. Returns the kept set and a description of every violation seen.
pub fn sanitize(mut set: AnnotationSet, frame: &CoordinateFrame, taken: &HashSet<String>) -> (AnnotationSet, Vec<String>) {
    let mut notes = vec![];
    let mut seen: HashSet<String> = taken.clone();
    let mut kept = Vec::with_capacity(set.strokes.len());
    for (i, mut s) in std::mem::take(&mut set.strokes).into_iter().enumerate() {
        if s.id.trim().is_empty() {
            s.id = format!("s{}", i + 1);
        }
        if seen.contains(&s.id) {
            let base = s.id.clone();
            let mut k = 2;
            while seen.contains(&format!("{base}_{k}")) {
                k += 1;
            }
            s.id = format!("{base}_{k}");
            notes.push(format!("{base}: duplicate stroke id renamed to {}", s.id));
        }
        let probe = AnnotationSet { strokes: vec![s.clone()], ..Default::default() };
        let vs = validate(&probe, frame);
        let blocking = vs.iter().any(Violation::blocks_render);
        notes.extend(vs.iter().map(|v| v.to_string()));
        if blocking {
            notes.push(format!("{}: stroke dropped", s.id));
            continue;
        }
        seen.insert(s.id.clone());
        kept.push(s);
    }
    if set.final_answer_early {
        notes.push(Violation::FinalAnswerEarly.to_string());
    }
    set.strokes = kept;
    (set, notes)
}

impl Session {
    pub fn new(id: impl Into<String>, base: RasterImage, cfg: PromptConfig, task: TaskPrompt, opts: SessionOptions) -> Result<Self, SessionError> {
        cfg.check()?;
        task.check()?;
        if cfg.mode == SessionMode::Stepwise && !cfg.sketch_enabled {
            return Err(SessionError::Config("stepwise sessions need the sketch prompt".into()));
        }
        if opts.max_turns == 0 {
            return Err(SessionError::Config("max_turns must be at least 1".into()));
        }
        let s = Self {
            id: id.into(),
            cfg,
            task,
            max_turns: opts.max_turns,
            turns: vec![],
            status: SessionStatus::Open,
            accumulated: AnnotationSet::default(),
            final_answer: None,
            base,
            style: opts.style,
            grid: opts.grid,
            event_log: opts.event_log,
        };
        s.log(&s.created_event())?;
        Ok(s)
    }

    pub fn created_event(&self) -> SessionEvent {
        SessionEvent::Created {
            id: self.id.clone(),
            cfg: self.cfg.clone(),
            task: self.task.clone(),
            max_turns: self.max_turns,
            base_sha256: self.base.sha256(),
            base_dims: self.base.dims(),
        }
    }

    /// Every event needed to rebuild this session.
    pub fn events(&self) -> Vec<SessionEvent> {
        let mut ev = vec![self.created_event()];
        ev.extend(self.turns.iter().map(|r| SessionEvent::Turn { record: r.clone() }));
        ev
    }

    /// Rebuilds a session from its events. `base` is the original image and
    /// `image_by_sha` resolves images injected mid-session.
    pub fn replay(
        events: &[SessionEvent],
        base: RasterImage,
        image_by_sha: impl Fn(&str) -> Option<RasterImage>,
        opts: SessionOptions,
    ) -> Result<Self, SessionError> {
        let Some(SessionEvent::Created { id, cfg, task, max_turns, base_sha256, .. }) = events.first() else {
            return Err(SessionError::Log("first event must be `created`".into()));
        };
        if base.sha256() != *base_sha256 {
            return Err(SessionError::Log("base image does not match the log".into()));
        }
        let mut s = Self::new(id.clone(), base, cfg.clone(), task.clone(), SessionOptions { max_turns: *max_turns, event_log: None, ..opts.clone() })?;
        for ev in &events[1..] {
            let SessionEvent::Turn { record } = ev else {
                return Err(SessionError::Log("duplicate `created` event".into()));
            };
            let injected = match &record.injected_image_sha256 {
                Some(sha) => Some(image_by_sha(sha).ok_or_else(|| SessionError::Log(format!("missing injected image {sha}")))?),
                None => None,
            };
            s.apply(record.clone(), injected);
        }
        s.event_log = opts.event_log;
        Ok(s)
    }

    pub fn read_events(path: &std::path::Path) -> Result<Vec<SessionEvent>, SessionError> {
        let text = std::fs::read_to_string(path).map_err(|e| SessionError::Log(e.to_string()))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| SessionError::Log(e.to_string())))
            .collect()
    }

    fn log(&self, ev: &SessionEvent) -> Result<(), SessionError> {
        if let Some(p) = &self.event_log {
            let mut f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| SessionError::Log(e.to_string()))?;
            writeln!(f, "{}", serde_json::to_string(ev).expect("events serialize")).map_err(|e| SessionError::Log(e.to_string()))?;
        }
        Ok(())
    }

    pub fn base_image(&self) -> &RasterImage {
        &self.base
    }

    pub fn style(&self) -> &OverlayStyle {
        &self.style
    }

    pub fn stroke_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.kind == TurnKind::Stroke).count()
    }

    /// Overlay of the accumulated strokes over the current base.
    pub fn overlay(&self) -> OverlayDocument {
        let (w, h) = self.base.dims();
        render_overlay(&self.accumulated, &self.cfg.frame, w, h, &self.style).expect("accumulated strokes are sanitized")
    }

    /// Base image with every accumulated stroke composited on it.
    pub fn composited(&self) -> RasterImage {
        composite(&self.base, &self.overlay()).expect("overlay matches base")
    }

    /// The image the next turn sends: the composite, with rulers appended
    /// when the grid is enabled.
    pub fn turn_image(&self) -> RasterImage {
        let img = self.composited();
        if self.cfg.grid_enabled {
            grid_augment(&img, &self.cfg.frame, &self.grid).expect("grid frame checked at construction").0
        } else {
            img
        }
    }

    /// The accumulated annotation with the final answer attached.
    pub fn annotation(&self) -> AnnotationSet {
        AnnotationSet { final_answer: self.final_answer.clone(), final_answer_early: false, ..self.accumulated.clone() }
    }

    fn history_text(&self) -> String {
        if self.accumulated.strokes.is_empty() {
            return String::new();
        }
        let prior = AnnotationSet { strokes: self.accumulated.strokes.clone(), concept: self.accumulated.concept.clone(), ..Default::default() };
        format!("Strokes already drawn on the image:\n{}", serialize_annotation(&prior, Dialect::XmlStyle))
    }

    fn next_kind(&self) -> TurnKind {
        match (self.cfg.mode, self.status) {
            (SessionMode::SingleTurn, _) => TurnKind::Single,
            (SessionMode::Stepwise, SessionStatus::AwaitingFinal) => TurnKind::Final,
            (SessionMode::Stepwise, _) => TurnKind::Stroke,
        }
    }

    /// The final turn is forced when the stroke budget is spent without the
    /// model stopping on its own.
    fn forced_final(&self) -> bool {
        self.stroke_turns() >= self.max_turns && self.turns.last().is_some_and(|t| !t.delta.strokes.is_empty())
    }

    fn build_messages(&self, kind: TurnKind, user_text: Option<&str>, history: &str, image: &RasterImage) -> Result<(Vec<ChatMessage>, String), SessionError> {
        let mut msgs = vec![];
        if let Some(sys) = build_system_prompt(&self.cfg) {
            msgs.push(ChatMessage::system(sys));
        }
        let guards = stepwise_guards();
        let mut texts: Vec<String> = vec![];
        match kind {
            TurnKind::Single => {}
            TurnKind::Stroke => texts.push(guards.one_stroke_guard.to_owned()),
            TurnKind::Final => texts.push(guards.final_answer_guard.to_owned()),
        }
        texts.push(build_task_prompt(&self.task)?);
        if !history.is_empty() {
            texts.push(history.to_owned());
        }
        if let Some(u) = user_text.filter(|u| !u.trim().is_empty()) {
            texts.push(u.to_owned());
        }
        let sent_text = texts.join("\n\n");
        let mut parts: Vec<Part> = texts.into_iter().map(Part::Text).collect();
        parts.push(Part::Image(image.clone()));
        msgs.push(ChatMessage::user(parts));
        Ok((msgs, sent_text))
    }

    /// Executes exactly one protocol turn. `new_image` replaces the base and
    /// clears the accumulated strokes before the turn is sent; the transcript
    /// is kept.
    pub fn step(&mut self, model: &dyn ChatModel, user_text: Option<&str>, new_image: Option<RasterImage>) -> Result<&TurnRecord, SessionError> {
        if matches!(self.status, SessionStatus::Done | SessionStatus::Failed) {
            return Err(SessionError::NotSteppable(self.status));
        }
        let injected_sha = new_image.as_ref().map(RasterImage::sha256);
        let saved = new_image.as_ref().map(|img| (std::mem::replace(&mut self.base, img.clone()), std::mem::take(&mut self.accumulated)));
        let kind = self.next_kind();
        let history = if kind == TurnKind::Single { String::new() } else { self.history_text() };
        let image = self.turn_image();
        let built = self.build_messages(kind, user_text, &history, &image);
        let result = built.and_then(|(msgs, sent_text)| Ok((model.complete(&msgs)?, sent_text)));
        if let Some((base, acc)) = saved {
            // Nothing is committed until `apply`; restore so a gateway error
            // leaves the session exactly as it was.
            self.base = base;
            self.accumulated = acc;
        }
        let (response, sent_text) = result?;

        let mut record = TurnRecord {
            index: self.turns.len() + 1,
            kind,
            sent_image_sha256: image.sha256(),
            sent_image_dims: image.dims(),
            sent_text,
            sent_text_history: history,
            user_text: user_text.map(str::to_owned),
            injected_image_sha256: injected_sha,
            response: response.clone(),
            delta: AnnotationSet::default(),
            final_answer: None,
            violations: vec![],
            flags: vec![],
        };
        if new_image.is_some() {
            record.flags.push(TurnFlag::ImageReplaced);
        }
        let mut parse_error = None;
        match kind {
            TurnKind::Final => {
                if self.forced_final() {
                    record.flags.push(TurnFlag::TurnLimitExceeded);
                }
                let parsed = parse_annotation(&response).ok().and_then(|s| s.final_answer).filter(|a| !a.is_empty());
                record.final_answer = parsed.or_else(|| extract_final_answer(&response));
                if record.final_answer.is_none() {
                    record.flags.push(TurnFlag::MissingFinalAnswer);
                }
            }
            TurnKind::Single | TurnKind::Stroke => match parse_annotation(&response) {
                Ok(set) => {
                    let taken: HashSet<String> = if new_image.is_some() { HashSet::new() } else { self.accumulated.strokes.iter().map(|s| s.id.clone()).collect() };
                    let (mut clean, notes) = sanitize(set, &self.cfg.frame, &taken);
                    record.violations = notes;
                    let answer = clean.final_answer.take().filter(|a| !a.is_empty());
                    if kind == TurnKind::Stroke {
                        if clean.strokes.len() > 1 {
                            let extra = clean.strokes.len() - 1;
                            clean.strokes.truncate(1);
                            record.flags.push(TurnFlag::ExtraStrokesDropped(extra));
                            record.violations.push(format!("stepwise turn emitted {} strokes; kept the first", extra + 1));
                        }
                        // An answer is only accepted on a stroke-free turn.
                        if clean.strokes.is_empty() {
                            record.final_answer = answer;
                        } else if answer.is_some() {
                            record.violations.push("final answer given alongside a stroke; ignored".into());
                        }
                    } else {
                        record.final_answer = answer;
                    }
                    clean.final_answer_early = false;
                    record.delta = clean;
                }
                Err(ParseError::NoAnswerBlock) if kind == TurnKind::Single && !self.cfg.sketch_enabled => {
                    // Plain baselines answer in prose.
                    record.final_answer = extract_final_answer(&response).or_else(|| Some(response.trim().to_owned()).filter(|s| !s.is_empty()));
                }
                Err(e) => {
                    record.flags.push(TurnFlag::ParseFailure);
                    parse_error = Some(e);
                }
            },
        }
        self.log(&SessionEvent::Turn { record: record.clone() })?;
        self.apply(record, new_image);
        if let Some(error) = parse_error {
            return Err(SessionError::ParseFailure { error, raw: response });
        }
        Ok(self.turns.last().expect("just pushed"))
    }

    /// Commits a turn record: the single place where session state changes.
    fn apply(&mut self, record: TurnRecord, injected: Option<RasterImage>) {
        if let Some(img) = injected {
            self.base = img;
            self.accumulated = AnnotationSet::default();
        }
        let failed = record.has_flag(&TurnFlag::ParseFailure);
        if self.accumulated.concept.is_none() {
            self.accumulated.concept = record.delta.concept.clone();
        }
        self.accumulated.strokes.extend(record.delta.strokes.iter().cloned());
        let kind = record.kind;
        let empty = record.delta.strokes.is_empty();
        let answer = record.final_answer.clone();
        self.turns.push(record);
        self.status = if failed {
            SessionStatus::Failed
        } else {
            match kind {
                TurnKind::Single | TurnKind::Final => SessionStatus::Done,
                TurnKind::Stroke if empty && answer.is_some() => SessionStatus::Done,
                TurnKind::Stroke if empty || self.stroke_turns() >= self.max_turns => SessionStatus::AwaitingFinal,
                TurnKind::Stroke => SessionStatus::Open,
            }
        };
        if matches!(kind, TurnKind::Single | TurnKind::Final) || answer.is_some() {
            self.final_answer = answer;
        }
    }

    /// One-call protocol. Returns the annotation (with its answer).
    pub fn run_single_turn(&mut self, model: &dyn ChatModel) -> Result<AnnotationSet, SessionError> {
        if self.cfg.mode != SessionMode::SingleTurn {
            return Err(SessionError::Config("run_single_turn needs a single-turn config".into()));
        }
        if self.status != SessionStatus::Open {
            return Err(SessionError::NotSteppable(self.status));
        }
        self.step(model, None, None)?;
        Ok(self.annotation())
    }

    /// Stepwise protocol until the answer turn. At most `max_turns + 1`
    /// model calls are made.
    pub fn run_multi_turn(&mut self, model: &dyn ChatModel) -> Result<AnnotationSet, SessionError> {
        if self.cfg.mode != SessionMode::Stepwise {
            return Err(SessionError::Config("run_multi_turn needs a stepwise config".into()));
        }
        while matches!(self.status, SessionStatus::Open | SessionStatus::AwaitingFinal) {
            self.step(model, None, None)?;
        }
        Ok(self.annotation())
    }

    /// Runs whichever protocol the config selects.
    pub fn run(&mut self, model: &dyn ChatModel) -> Result<AnnotationSet, SessionError> {
        match self.cfg.mode {
            SessionMode::SingleTurn => self.run_single_turn(model),
            SessionMode::Stepwise => self.run_multi_turn(model),
        }
    }

    /// The model responses in turn order, suitable as a mock script that
    /// replays this session.
    pub fn recorded_script(&self) -> Vec<String> {
        self.turns.iter().map(|t| t.response.clone()).collect()
    }
}

/// Wraps one stroke as a complete stepwise response.
pub fn stroke_response(stroke: &Stroke) -> String {
    serialize_annotation(&AnnotationSet { strokes: vec![stroke.clone()], ..Default::default() }, Dialect::XmlStyle)
}

/// Response for a stepwise turn that draws nothing.
pub const EMPTY_RESPONSE: &str = "<answer>\n</answer>";

pub fn final_response(answer: &str) -> String {
    format!("<final_answer>{answer}</final_answer>")
}
