//! Prompt construction. Every template lives in `prompts/*.txt` next to a
//! `SHA256SUMS` file so accidental edits show up as test failures.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::stroke::{CoordinateFrame, Origin};

/// Bumped whenever a shipped template changes on purpose.
pub const PROMPT_VERSION: &str = "1";

pub mod assets {
    pub const SYSTEM_BASE: &str = include_str!("../prompts/system_base.txt");
    pub const SKETCH_METHODS: &str = include_str!("../prompts/sketch_methods.txt");
    pub const COUNTING: &str = include_str!("../prompts/counting.txt");
    pub const LABELING: &str = include_str!("../prompts/labeling.txt");
    pub const FREE_QUESTION: &str = include_str!("../prompts/free_question.txt");
    pub const GUARD_ONE_STROKE: &str = include_str!("../prompts/guard_one_stroke.txt");
    pub const GUARD_FINAL_ANSWER: &str = include_str!("../prompts/guard_final_answer.txt");
    pub const JUDGE_BALL_PHYSICS: &str = include_str!("../prompts/judge_ball_physics.txt");
    pub const JUDGE_MAZE: &str = include_str!("../prompts/judge_maze.txt");
    pub const JUDGE_ALIGNMENT: &str = include_str!("../prompts/judge_alignment.txt");
    pub const JUDGE_FORMAT_REMINDER: &str = include_str!("../prompts/judge_format_reminder.txt");
    pub const MAZE_QUESTION: &str = include_str!("../prompts/maze_question.txt");
    pub const SHA256SUMS: &str = include_str!("../prompts/SHA256SUMS");

    /// `(file name, contents)` for every checksummed asset.
    pub const ALL: [(&str, &str); 12] = [
        ("counting.txt", COUNTING),
        ("free_question.txt", FREE_QUESTION),
        ("guard_final_answer.txt", GUARD_FINAL_ANSWER),
        ("guard_one_stroke.txt", GUARD_ONE_STROKE),
        ("judge_alignment.txt", JUDGE_ALIGNMENT),
        ("judge_ball_physics.txt", JUDGE_BALL_PHYSICS),
        ("judge_format_reminder.txt", JUDGE_FORMAT_REMINDER),
        ("judge_maze.txt", JUDGE_MAZE),
        ("labeling.txt", LABELING),
        ("maze_question.txt", MAZE_QUESTION),
        ("sketch_methods.txt", SKETCH_METHODS),
        ("system_base.txt", SYSTEM_BASE),
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    #[default]
    SingleTurn,
    Stepwise,
}

/// The ablation surface: grid on/off, sketch prompt on/off, turn protocol,
/// and the coordinate convention the model is told to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub frame: CoordinateFrame,
    pub grid_enabled: bool,
    pub mode: SessionMode,
    pub sketch_enabled: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { frame: CoordinateFrame::default(), grid_enabled: true, mode: SessionMode::SingleTurn, sketch_enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("grid rulers require a grid-cell coordinate frame")]
    GridNeedsGridFrame,
    #[error("counting prompt needs a non-empty object name")]
    EmptyObject,
    #[error("labeling prompt needs at least one part name")]
    EmptyLabels,
    #[error("unsubstituted placeholder {0}")]
    Unsubstituted(String),
}

impl PromptConfig {
    pub fn check(&self) -> Result<(), PromptError> {
        if self.grid_enabled && !self.frame.is_grid() {
            return Err(PromptError::GridNeedsGridFrame);
        }
        Ok(())
    }

    /// Grid cells with rulers (the default), or the normalized 1000-unit
    /// top-left scale used without rulers.
    pub fn with_grid(grid: bool) -> Self {
        if grid {
            Self::default()
        } else {
            Self {
                frame: CoordinateFrame::normalized(CoordinateFrame::DEFAULT_SCALE, Origin::TopLeft).expect("valid scale"),
                grid_enabled: false,
                ..Self::default()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPrompt {
    FreeQuestion { text: String },
    Counting { object: String },
    Labeling { concept: String, labels_hint: Vec<String> },
}

impl TaskPrompt {
    pub fn check(&self) -> Result<(), PromptError> {
        match self {
            TaskPrompt::Counting { object } if object.trim().is_empty() => Err(PromptError::EmptyObject),
            TaskPrompt::Labeling { labels_hint, .. } if labels_hint.is_empty() => Err(PromptError::EmptyLabels),
            _ => Ok(()),
        }
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{[A-Za-z_][A-Za-z0-9_]*\}").expect("valid regex"))
}

/// Replaces each `{name}` in `template`; fails if an identifier-shaped
/// placeholder survives. Brace text with spaces (output-format hints such as
/// `{integer from 1 - 5}`) is prose, not a placeholder.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    if let Some(m) = placeholder_re().find_iter(template).find(|m| {
        let key = &m.as_str()[1..m.as_str().len() - 1];
        !vars.iter().any(|(k, _)| *k == key)
    }) {
        return Err(PromptError::Unsubstituted(m.as_str().to_owned()));
    }
    Ok(placeholder_re()
        .replace_all(template, |c: &regex::Captures<'_>| {
            let key = &c[0][1..c[0].len() - 1];
            vars.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_string()).expect("checked above")
        })
        .into_owned())
}

const RULER_SENTENCE: &str = "The grid uses numbers (0 to {res_x}) along the bottom (x axis) and numbers (0 to {res_y}) along the left edge (y axis) to reference specific locations within the grid.";
const NORMALIZED_SENTENCE: &str = "The grid is a normalized coordinate scale laid over the image: x runs from 0 to {res_x} across the image width and y runs from 0 to {res_y} across the image height.";

/// System prompt for the configured frame, or `None` when the sketch prompt
/// is switched off. Grid frames substitute the grid resolution; normalized
/// frames substitute the scale on both axes and describe the scale in place
/// of the ruler sentence, since no ruler is attached to the image.
pub fn build_system_prompt(cfg: &PromptConfig) -> Option<String> {
    if !cfg.sketch_enabled {
        return None;
    }
    let (res_x, res_y) = (cfg.frame.x_max(), cfg.frame.y_max());
    let (corner, bl, right) = match cfg.frame.origin() {
        Origin::TopLeft => ("top left", format!("x0y{res_y}"), format!("x1y{res_y}")),
        Origin::BottomLeft => ("bottom left", "x0y0".to_owned(), "x1y0".to_owned()),
    };
    let base = if cfg.grid_enabled { assets::SYSTEM_BASE.to_owned() } else { assets::SYSTEM_BASE.replace(RULER_SENTENCE, NORMALIZED_SENTENCE) };
    let (rx, ry) = (res_x.to_string(), res_y.to_string());
    let head = fill(
        &base,
        &[
            ("res_x", &rx),
            ("res_y", &ry),
            ("origin_corner", corner),
            ("example_bottom_left", &bl),
            ("example_right_of_bottom_left", &right),
        ],
    )
    .expect("system template placeholders are fixed");
    Some(format!("{head}\n{}", assets::SKETCH_METHODS))
}

pub fn build_task_prompt(task: &TaskPrompt) -> Result<String, PromptError> {
    task.check()?;
    match task {
        TaskPrompt::Counting { object } => fill(assets::COUNTING, &[("object", object)]),
        TaskPrompt::Labeling { concept, labels_hint } => {
            fill(assets::LABELING, &[("concept", concept), ("labels_hint", &labels_hint.join(", "))])
        }
        TaskPrompt::FreeQuestion { text } => fill(assets::FREE_QUESTION, &[("question", text)]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepwiseGuards {
    pub one_stroke_guard: &'static str,
    pub final_answer_guard: &'static str,
}

pub fn stepwise_guards() -> StepwiseGuards {
    StepwiseGuards { one_stroke_guard: assets::GUARD_ONE_STROKE, final_answer_guard: assets::GUARD_FINAL_ANSWER }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rubric {
    BallPhysics,
    MazeNav,
}

/// Quality rubric text; the maze rubric needs the proposed move list.
pub fn rubric_prompt(rubric: Rubric, proposed_path: Option<&str>) -> String {
    match rubric {
        Rubric::BallPhysics => assets::JUDGE_BALL_PHYSICS.to_owned(),
        Rubric::MazeNav => assets::JUDGE_MAZE.replace("{INSERT_ORIGINAL_PROMPT_PATH}", proposed_path.unwrap_or("")),
    }
}

pub fn alignment_prompt(question: &str) -> String {
    fill(assets::JUDGE_ALIGNMENT, &[("question", question)]).expect("alignment template placeholders are fixed")
}

/// Maze task question: the fixed maze description plus the move list.
pub fn maze_question(moves: &str) -> String {
    format!(
        "{}\nProposed path: {moves}\nIs the proposed path valid? Answer Yes or No.",
        assets::MAZE_QUESTION.trim_end()
    )
}
