//! History textualization: scenario templates, prompt rendering for the raw
//! (RH), summarized (SH) and algorithm-guided (AG) schemas, and reply parsing.

pub mod names;
pub mod parse;
mod render;
pub mod template;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classical::{ArmValue, Bonus, UcbState};
use crate::env::{ActionDomain, CbContext, CbInstance, MabInstance, Task};
use crate::{Error, Result};

pub use parse::{parse_action, ParsedArm, ParsedSummary, ReplyError};
pub use render::{
    fewshot_header, render_ag, render_cb, render_excerpt, render_prompt, render_rh, render_sh,
    CbView, PromptInput, FEWSHOT_SEPARATOR,
};
use template::TemplateFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Textualization {
    #[serde(rename = "RH", alias = "rh")]
    Rh,
    #[serde(rename = "SH", alias = "sh")]
    Sh,
    #[serde(rename = "AG", alias = "ag")]
    Ag,
}

impl Textualization {
    pub fn as_str(self) -> &'static str {
        match self {
            Textualization::Rh => "RH",
            Textualization::Sh => "SH",
            Textualization::Ag => "AG",
        }
    }
}

impl std::fmt::Display for Textualization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Textualization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RH" => Ok(Textualization::Rh),
            "SH" => Ok(Textualization::Sh),
            "AG" => Ok(Textualization::Ag),
            other => Err(Error::Config(format!("unknown textualization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    MabVideos,
    MabClothes,
    CbMovies,
}

impl ScenarioKind {
    pub fn is_contextual(self) -> bool {
        matches!(self, ScenarioKind::CbMovies)
    }

    fn builtin_templates(self) -> &'static str {
        match self {
            ScenarioKind::MabVideos => template::MAB_VIDEOS,
            ScenarioKind::MabClothes => template::MAB_CLOTHES,
            ScenarioKind::CbMovies => template::CB_MOVIES,
        }
    }
}

/// Default number of most recent interactions shown in contextual prompts.
pub const DEFAULT_CB_WINDOW: usize = 20;

/// A task as the agent reads it: scenario text plus its action set.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub action_names: Vec<String>,
    /// Names with side information (movie genres); equal to the names for MAB.
    pub action_descriptions: Vec<String>,
    /// Decimals for exploitation / exploration values; `None` prints the
    /// shortest round-trip representation.
    pub value_decimals: Option<usize>,
    /// Contextual prompts show at most this many recent interactions.
    pub history_window: Option<usize>,
    templates: Arc<TemplateFile>,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, action_names: Vec<String>, action_descriptions: Vec<String>) -> Result<Self> {
        if action_names.len() != action_descriptions.len() {
            return Err(Error::Shape {
                what: "action descriptions",
                expected: action_names.len(),
                got: action_descriptions.len(),
            });
        }
        let templates = TemplateFile::parse(kind.builtin_templates())?;
        let (value_decimals, history_window) = if kind.is_contextual() {
            (Some(3), Some(DEFAULT_CB_WINDOW))
        } else {
            (Some(2), None)
        };
        Ok(Self {
            kind,
            action_names,
            action_descriptions,
            value_decimals,
            history_window,
            templates: Arc::new(templates),
        })
    }

    pub fn mab(domain: ActionDomain, action_names: Vec<String>) -> Result<Self> {
        let kind = match domain {
            ActionDomain::Videos => ScenarioKind::MabVideos,
            ActionDomain::Clothes => ScenarioKind::MabClothes,
        };
        Self::new(kind, action_names.clone(), action_names)
    }

    pub fn for_mab(instance: &MabInstance) -> Result<Self> {
        Self::mab(instance.config.action_domain, instance.action_names.clone())
    }

    pub fn for_movies(instance: &CbInstance) -> Result<Self> {
        Self::new(
            ScenarioKind::CbMovies,
            instance.action_names(),
            instance.action_descriptions(),
        )
    }

    pub fn for_task(task: &Task) -> Result<Self> {
        match task {
            Task::Mab(m) => Self::for_mab(m),
            Task::MovieLens(t) => Self::for_movies(&t.instance),
            Task::Linear(_) => Err(Error::Config(
                "synthetic linear tasks have no textual scenario".into(),
            )),
        }
    }

    pub fn with_templates(mut self, templates: TemplateFile) -> Self {
        self.templates = Arc::new(templates);
        self
    }

    pub fn with_value_decimals(mut self, decimals: Option<usize>) -> Self {
        self.value_decimals = decimals;
        self
    }

    pub fn with_history_window(mut self, window: Option<usize>) -> Self {
        self.history_window = window;
        self
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.action_names.iter().position(|n| n == name)
    }

    pub(crate) fn templates(&self) -> &TemplateFile {
        &self.templates
    }
}

/// One past interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    /// 1-based step index.
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<CbContext>,
    pub arm: usize,
    pub action: String,
    pub reward: f64,
    /// Per-arm oracle values shown alongside the context (contextual AG).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<ArmValue>>,
}

/// Checks that steps are strictly increasing from 1.
pub fn validate_history(history: &[HistoryRecord]) -> Result<()> {
    for (i, r) in history.iter().enumerate() {
        if i > 0 && r.step <= history[i - 1].step {
            return Err(Error::Render(format!(
                "history steps must increase (step {} follows {})",
                r.step,
                history[i - 1].step
            )));
        }
        if r.step == 0 {
            return Err(Error::Render("history steps start at 1".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub count: u64,
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ArmValue>,
}

/// Sufficient statistics per arm, optionally with oracle values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub steps: u64,
    pub arms: Vec<ArmSummary>,
}

impl SummaryStats {
    pub fn from_ucb(state: &UcbState, with_values: bool) -> Self {
        let values = state.values();
        Self {
            steps: state.steps,
            arms: (0..state.num_arms())
                .map(|a| ArmSummary {
                    count: state.counts[a],
                    mean: state.mean(a),
                    value: with_values.then_some(values[a]),
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: u64 = self.arms.iter().map(|a| a.count).sum();
        if total != self.steps {
            return Err(Error::Render(format!(
                "arm counts sum to {total} but horizon is {}",
                self.steps
            )));
        }
        for arm in &self.arms {
            if let Some(ArmValue {
                explore: Bonus::Finite(b),
                ..
            }) = arm.value
            {
                if b < 0.0 {
                    return Err(Error::Render(format!("negative exploration bonus {b}")));
                }
            }
        }
        Ok(())
    }
}
