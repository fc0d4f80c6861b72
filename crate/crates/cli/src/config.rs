//! Run configuration.
//!
//! A run config is a single TOML document:
//!
//! ```toml
//! seed = 7
//! trials = 30
//! out = "runs/demo"
//!
//! [movielens]
//! synthetic = { users = 400, movies = 60 }
//!
//! [[task]]
//! preset = "mab-full-16"
//!
//! [[task]]
//! kind = "movielens"
//! arms = 10
//! dim = 5
//!
//! [[agent]]
//! name = "ucb"
//! policy = "classical_ucb"
//!
//! [[agent]]
//! name = "mock-ag"
//! policy = "textual_mock"
//! textualization = "AG"
//! applies_to = "mab"
//! ```
//!
//! Unknown keys are rejected, and every validation error names the key and
//! the line it sits on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use explore_core::agent::{HttpConfig, PolicyKind};
use explore_core::env::{ActionDomain, Difficulty, RewardKind};
use explore_core::textual::Textualization;
use serde::{Deserialize, Serialize};
use toml::Spanned;

pub const DEFAULT_USER_SPLIT: f64 = 0.2;
pub const DEFAULT_LINEAR_NOISE: f64 = 0.1;
pub const DEFAULT_EMBED_DIM: usize = 5;
pub const DEFAULT_CB_ARMS: usize = 10;

fn default_trials() -> usize {
    explore_core::eval::DEFAULT_TRIALS
}

fn default_taint_threshold() -> f64 {
    explore_core::eval::DEFAULT_TAINT_THRESHOLD
}

fn default_user_split() -> f64 {
    DEFAULT_USER_SPLIT
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Fallback rate above which a trial is flagged as tainted.
    #[serde(default = "default_taint_threshold")]
    pub taint_threshold: f64,
    /// Unequal-variance t-tests in the win-rate tournament.
    #[serde(default, skip_serializing_if = "is_false")]
    pub welch: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movielens: Option<MovieLensSource>,
    #[serde(default, rename = "task", skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<TaskEntry>,
    #[serde(default, rename = "agent", skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distill: Option<DistillEntry>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: default_trials(),
            out: None,
            workers: None,
            taint_threshold: default_taint_threshold(),
            welch: false,
            movielens: None,
            tasks: Vec::new(),
            agents: Vec::new(),
            distill: None,
        }
    }
}

impl RunConfig {
    /// Canonical TOML text. Parsing it back gives an equal config.
    pub fn canonical(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// The part of the config that determines results: output location and
    /// worker count are dropped.
    pub fn result_relevant(&self) -> RunConfig {
        RunConfig {
            out: None,
            workers: None,
            ..self.clone()
        }
    }
}

/// Where MovieLens-format data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovieLensSource {
    /// Directory with `ratings.dat`, `users.dat` and `movies.dat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Generate a synthetic corpus of this size instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticCorpus>,
    #[serde(default = "default_user_split")]
    pub user_split: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub users: usize,
    pub movies: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskPreset {
    /// The 16 multi-armed configurations.
    #[serde(rename = "mab-full-16")]
    MabFull16,
    /// MovieLens with 10 and 30 arms, d = 5, held-out users.
    #[serde(rename = "cb-2")]
    Cb2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Mab,
    Movielens,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Eval,
}

/// One `[[task]]` table: either a preset or a single task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<TaskPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TaskKind>,
    /// Label override; defaults to a label built from the parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<ActionDomain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Gap used when fitting regret curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Cassette,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AppliesTo {
    Mab,
    Cb,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FewshotSource {
    /// Demonstrations from the task being evaluated (training users for
    /// MovieLens).
    Same,
    /// Bernoulli, easy, K = 5, videos.
    Easiest,
    /// Bernoulli, hard, K = 20, clothes.
    Hardest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewshotEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<FewshotSource>,
    /// A ready-made block, used verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demos: Option<usize>,
    /// Inclusive range of excerpt lengths in steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excerpt: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub name: String,
    pub policy: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub textualization: Option<Textualization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_limit: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cassette: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http: Option<HttpConfig>,
    /// Decimals for values shown in AG prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_decimals: Option<usize>,
    /// Print AG values at full precision instead.
    #[serde(default, skip_serializing_if = "is_false")]
    pub full_precision: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fewshot: Option<FewshotEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applies_to: Option<AppliesTo>,
}

impl AgentEntry {
    pub fn new(name: impl Into<String>, policy: PolicyKind) -> Self {
        Self {
            name: name.into(),
            policy,
            textualization: None,
            alpha: None,
            ridge: None,
            epsilon: None,
            model: None,
            temperature: None,
            retry_limit: None,
            backend: None,
            cassette: None,
            http: None,
            value_decimals: None,
            full_precision: false,
            history_window: None,
            fewshot: None,
            applies_to: None,
        }
    }

    /// Task families the agent runs on. LinUCB defaults to contextual tasks
    /// only, everything else to all tasks.
    pub fn scope(&self) -> AppliesTo {
        self.applies_to.unwrap_or(match self.policy {
            PolicyKind::ClassicalLinUcb => AppliesTo::Cb,
            _ => AppliesTo::All,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistillPreset {
    /// Easiest and hardest Bernoulli bandits plus MovieLens, each as RH
    /// and AG.
    #[serde(rename = "paper-6")]
    Six,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizesEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mab_trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mab_easy_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mab_hard_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cb_trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cb_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub task: TaskEntry,
    pub textualization: Textualization,
    pub trajectories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Exploration weight of the oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<DistillPreset>,
    /// Arms and embedding size of the MovieLens task in the preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cb_arms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cb_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<SizesEntry>,
    #[serde(default, rename = "dataset", skip_serializing_if = "Vec::is_empty")]
    pub datasets: Vec<DatasetEntry>,
}

/// A validation problem located in the config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub file: PathBuf,
    pub line: Option<usize>,
    /// Dotted key path, e.g. `agent[1].policy`.
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, ": key `{key}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Line numbers of one table and its keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TableLines {
    pub table: Option<usize>,
    pub keys: BTreeMap<String, usize>,
}

impl TableLines {
    fn line(&self, key: &str) -> Option<usize> {
        self.keys.get(key).copied().or(self.table)
    }
}

/// Where things are in the config text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceMap {
    pub top: TableLines,
    pub movielens: TableLines,
    pub tasks: Vec<TableLines>,
    pub agents: Vec<TableLines>,
    pub distill: TableLines,
    pub datasets: Vec<TableLines>,
}

type SpannedTable = BTreeMap<String, Spanned<toml::Value>>;

#[derive(Deserialize, Default)]
struct Layout {
    #[serde(default)]
    movielens: Option<Spanned<SpannedTable>>,
    #[serde(default)]
    task: Vec<Spanned<SpannedTable>>,
    #[serde(default)]
    agent: Vec<Spanned<SpannedTable>>,
    #[serde(default)]
    distill: Option<Spanned<DistillLayout>>,
}

#[derive(Deserialize, Default)]
struct DistillLayout {
    #[serde(default)]
    dataset: Vec<Spanned<SpannedTable>>,
}

struct LineIndex(Vec<usize>);

impl LineIndex {
    fn new(text: &str) -> Self {
        Self(text.match_indices('\n').map(|(i, _)| i).collect())
    }

    fn line(&self, offset: usize) -> usize {
        self.0.partition_point(|&nl| nl < offset) + 1
    }
}

fn table_lines(index: &LineIndex, table: &Spanned<SpannedTable>) -> TableLines {
    TableLines {
        table: Some(index.line(table.span().start)),
        keys: table
            .get_ref()
            .iter()
            .map(|(k, v)| (k.clone(), index.line(v.span().start)))
            .collect(),
    }
}

fn source_map(text: &str) -> SourceMap {
    let index = LineIndex::new(text);
    let top: SpannedTable = toml::from_str(text).unwrap_or_default();
    let layout: Layout = toml::from_str(text).unwrap_or_default();
    let distill = layout.distill.as_ref();
    SourceMap {
        top: TableLines {
            table: None,
            keys: top.iter().map(|(k, v)| (k.clone(), index.line(v.span().start))).collect(),
        },
        movielens: layout.movielens.as_ref().map(|t| table_lines(&index, t)).unwrap_or_default(),
        tasks: layout.task.iter().map(|t| table_lines(&index, t)).collect(),
        agents: layout.agent.iter().map(|t| table_lines(&index, t)).collect(),
        distill: TableLines {
            table: distill.map(|d| index.line(d.span().start)),
            keys: BTreeMap::new(),
        },
        datasets: distill
            .map(|d| d.get_ref().dataset.iter().map(|t| table_lines(&index, t)).collect())
            .unwrap_or_default(),
    }
}

/// Where in the config a problem is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site<'a> {
    Top(&'a str),
    MovieLens(&'a str),
    Task(usize, &'a str),
    Agent(usize, &'a str),
    Distill(&'a str),
    Dataset(usize, &'a str),
}

/// A parsed config together with its origin.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub file: PathBuf,
    /// Directory relative paths in the config are resolved against.
    pub base_dir: PathBuf,
    pub map: SourceMap,
    /// Raw HTTP tables per agent, for key checking.
    http_keys: Vec<Option<(usize, Vec<String>)>>,
}

/// Reads and parses a config file; see [`parse_config`].
pub fn load_config(path: &Path) -> anyhow::Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: path.to_path_buf(),
        line: None,
        key: None,
        message: format!("cannot read config: {e}"),
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(parse_config(&text, path, &base)?)
}

/// Parses config text. Syntax and schema errors carry the offending line.
pub fn parse_config(text: &str, file: &Path, base_dir: &Path) -> Result<LoadedConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let index = LineIndex::new(text);
        ConfigError {
            file: file.to_path_buf(),
            line: e.span().map(|s| index.line(s.start)),
            key: None,
            message: e.message().trim().to_string(),
        }
    })?;
    let layout: Layout = toml::from_str(text).unwrap_or_default();
    let index = LineIndex::new(text);
    let http_keys = layout
        .agent
        .iter()
        .map(|a| {
            a.get_ref().get("http").and_then(|h| match h.get_ref() {
                toml::Value::Table(t) => Some((index.line(h.span().start), t.keys().cloned().collect())),
                _ => None,
            })
        })
        .collect();
    Ok(LoadedConfig {
        config,
        file: file.to_path_buf(),
        base_dir: base_dir.to_path_buf(),
        map: source_map(text),
        http_keys,
    })
}

fn path_safe(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl LoadedConfig {
    /// A config error at `site`.
    pub fn error(&self, site: Site<'_>, message: impl Into<String>) -> ConfigError {
        let (line, key) = match site {
            Site::Top(k) => (self.map.top.line(k), k.to_string()),
            Site::MovieLens(k) => (self.map.movielens.line(k), format!("movielens.{k}")),
            Site::Task(i, k) => (
                self.map.tasks.get(i).and_then(|t| t.line(k)),
                format!("task[{i}].{k}"),
            ),
            Site::Agent(i, k) => (
                self.map.agents.get(i).and_then(|t| t.line(k)),
                format!("agent[{i}].{k}"),
            ),
            Site::Distill(k) => (
                self.map.distill.line(k).or(self.map.top.line("distill")),
                format!("distill.{k}"),
            ),
            Site::Dataset(i, k) => (
                self.map.datasets.get(i).and_then(|t| t.line(k)),
                format!("distill.dataset[{i}].{k}"),
            ),
        };
        ConfigError {
            file: self.file.clone(),
            line,
            key: Some(key),
            message: message.into(),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Static checks that need no data: ranges, required and conflicting
    /// keys, names. Task/agent binding rules are checked once tasks exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        if c.trials == 0 {
            return Err(self.error(Site::Top("trials"), "must be at least 1"));
        }
        if c.workers == Some(0) {
            return Err(self.error(Site::Top("workers"), "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&c.taint_threshold) {
            return Err(self.error(Site::Top("taint_threshold"), "must lie in [0, 1]"));
        }
        if let Some(ml) = &c.movielens {
            match (&ml.dir, &ml.synthetic) {
                (Some(_), Some(_)) => {
                    return Err(self.error(Site::MovieLens("synthetic"), "set either `dir` or `synthetic`, not both"))
                }
                (None, None) => return Err(self.error(Site::MovieLens("dir"), "set `dir` or `synthetic`")),
                (None, Some(s)) if s.users < 2 || s.movies < 2 => {
                    return Err(self.error(Site::MovieLens("synthetic"), "needs at least 2 users and 2 movies"))
                }
                _ => {}
            }
            if !(ml.user_split > 0.0 && ml.user_split < 1.0) {
                return Err(self.error(Site::MovieLens("user_split"), "must lie strictly between 0 and 1"));
            }
        }
        for (i, t) in c.tasks.iter().enumerate() {
            self.validate_task(t, &|k| Site::Task(i, k))?;
        }
        let mut names = BTreeSet::new();
        for (i, a) in c.agents.iter().enumerate() {
            if !path_safe(&a.name) {
                return Err(self.error(
                    Site::Agent(i, "name"),
                    format!("{:?} must be non-empty and use only letters, digits, '-', '_' or '.'", a.name),
                ));
            }
            if !names.insert(a.name.as_str()) {
                return Err(self.error(Site::Agent(i, "name"), format!("duplicate agent name {:?}", a.name)));
            }
            self.validate_agent(i, a)?;
        }
        if let Some(d) = &c.distill {
            self.validate_distill(d)?;
        }
        Ok(())
    }

    fn validate_task(&self, t: &TaskEntry, site: &dyn Fn(&'static str) -> Site<'static>) -> Result<(), ConfigError> {
        let present: Vec<&'static str> = [
            ("name", t.name.is_some()),
            ("reward", t.reward.is_some()),
            ("difficulty", t.difficulty.is_some()),
            ("arms", t.arms.is_some()),
            ("domain", t.domain.is_some()),
            ("dim", t.dim.is_some()),
            ("split", t.split.is_some()),
            ("noise", t.noise.is_some()),
            ("delta_min", t.delta_min.is_some()),
        ]
        .into_iter()
        .filter_map(|(k, set)| set.then_some(k))
        .collect();
        let forbid = |allowed: &[&str], what: &str| -> Result<(), ConfigError> {
            match present.iter().find(|k| !allowed.contains(k)) {
                Some(k) => Err(self.error(site(k), format!("not valid for {what}"))),
                None => Ok(()),
            }
        };
        if t.horizon == Some(0) {
            return Err(self.error(site("horizon"), "must be at least 1"));
        }
        if let Some(d) = t.delta_min {
            if !(d > 0.0 && d.is_finite()) {
                return Err(self.error(site("delta_min"), "must be positive"));
            }
        }
        if let Some(name) = &t.name {
            if !path_safe(name) {
                return Err(self.error(site("name"), format!("{name:?} is not a valid label")));
            }
        }
        match (t.preset, t.kind) {
            (Some(_), Some(_)) => Err(self.error(site("kind"), "set either `preset` or `kind`, not both")),
            (None, None) => Err(self.error(site("kind"), "each task needs `preset` or `kind`")),
            (Some(preset), None) => {
                forbid(&[], "a preset")?;
                if preset == TaskPreset::Cb2 && self.config.movielens.is_none() {
                    return Err(self.error(site("preset"), "the cb-2 preset needs a [movielens] section"));
                }
                Ok(())
            }
            (None, Some(TaskKind::Mab)) => {
                forbid(&["name", "reward", "difficulty", "arms", "domain", "delta_min"], "a multi-armed task")?;
                for (k, missing) in [
                    ("reward", t.reward.is_none()),
                    ("difficulty", t.difficulty.is_none()),
                    ("arms", t.arms.is_none()),
                ] {
                    if missing {
                        return Err(self.error(site(k), "required for a multi-armed task"));
                    }
                }
                if t.arms < Some(2) {
                    return Err(self.error(site("arms"), "needs at least 2 arms"));
                }
                Ok(())
            }
            (None, Some(TaskKind::Movielens)) => {
                forbid(&["name", "arms", "dim", "split", "delta_min"], "a MovieLens task")?;
                if self.config.movielens.is_none() {
                    return Err(self.error(site("kind"), "MovieLens tasks need a [movielens] section"));
                }
                if t.arms.is_some_and(|k| k < 2) {
                    return Err(self.error(site("arms"), "needs at least 2 arms"));
                }
                if t.dim == Some(0) {
                    return Err(self.error(site("dim"), "must be at least 1"));
                }
                Ok(())
            }
            (None, Some(TaskKind::Linear)) => {
                forbid(&["name", "arms", "dim", "noise", "delta_min"], "a linear task")?;
                if t.arms.is_none_or(|k| k < 2) {
                    return Err(self.error(site("arms"), "a linear task needs at least 2 arms"));
                }
                if t.dim.is_none_or(|d| d == 0) {
                    return Err(self.error(site("dim"), "a linear task needs a positive `dim`"));
                }
                if t.noise.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
                    return Err(self.error(site("noise"), "must be non-negative"));
                }
                Ok(())
            }
        }
    }

    fn validate_agent(&self, i: usize, a: &AgentEntry) -> Result<(), ConfigError> {
        let at = |k| Site::Agent(i, k);
        let textual_only = [
            ("textualization", a.textualization.is_some()),
            ("model", a.model.is_some()),
            ("temperature", a.temperature.is_some()),
            ("retry_limit", a.retry_limit.is_some()),
            ("backend", a.backend.is_some()),
            ("cassette", a.cassette.is_some()),
            ("http", a.http.is_some()),
            ("value_decimals", a.value_decimals.is_some()),
            ("full_precision", a.full_precision),
            ("history_window", a.history_window.is_some()),
            ("fewshot", a.fewshot.is_some()),
        ];
        if !a.policy.is_textual() {
            if let Some((k, _)) = textual_only.iter().find(|(_, set)| *set) {
                return Err(self.error(at(k), format!("only textual policies take `{k}`")));
            }
        }
        if a.epsilon.is_some() && a.policy != PolicyKind::EpsilonGreedy {
            return Err(self.error(at("epsilon"), "only epsilon_greedy takes `epsilon`"));
        }
        if a.ridge.is_some() && a.policy != PolicyKind::ClassicalLinUcb {
            return Err(self.error(at("ridge"), "only classical_lin_ucb takes `ridge`"));
        }
        if let Some(e) = a.epsilon {
            if !(0.0..=1.0).contains(&e) {
                return Err(self.error(at("epsilon"), "must lie in [0, 1]"));
            }
        }
        for (k, v) in [("alpha", a.alpha), ("ridge", a.ridge), ("temperature", a.temperature)] {
            if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
                return Err(self.error(at(k), "must be non-negative"));
            }
        }
        if a.ridge == Some(0.0) {
            return Err(self.error(at("ridge"), "must be positive"));
        }
        if a.full_precision && a.value_decimals.is_some() {
            return Err(self.error(at("full_precision"), "conflicts with `value_decimals`"));
        }
        if a.history_window == Some(0) {
            return Err(self.error(at("history_window"), "must be at least 1"));
        }
        match (a.policy, a.backend) {
            (PolicyKind::TextualMock, None | Some(BackendKind::Mock)) => {}
            (PolicyKind::TextualMock, Some(_)) => {
                return Err(self.error(at("backend"), "textual_mock always uses the mock backend"))
            }
            (PolicyKind::RemoteLlm, None) => {
                return Err(self.error(at("policy"), "remote_llm needs `backend = \"cassette\"` or `\"http\"`"))
            }
            (PolicyKind::RemoteLlm, Some(BackendKind::Mock)) => {
                return Err(self.error(at("backend"), "use policy = \"textual_mock\" for the mock backend"))
            }
            _ => {}
        }
        match (a.backend, a.cassette.is_some(), a.http.is_some()) {
            (Some(BackendKind::Cassette), false, _) => {
                return Err(self.error(at("backend"), "the cassette backend needs a `cassette` file"))
            }
            (b, true, _) if b != Some(BackendKind::Cassette) => {
                return Err(self.error(at("cassette"), "only used with backend = \"cassette\""))
            }
            (b, _, true) if b != Some(BackendKind::Http) => {
                return Err(self.error(at("http"), "only used with backend = \"http\""))
            }
            _ => {}
        }
        if let Some(Some((line, keys))) = self.http_keys.get(i) {
            let known = known_http_keys();
            if let Some(k) = keys.iter().find(|k| !known.contains(k.as_str())) {
                return Err(ConfigError {
                    file: self.file.clone(),
                    line: Some(*line),
                    key: Some(format!("agent[{i}].http.{k}")),
                    message: format!(
                        "unknown field, expected one of {}",
                        known.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", ")
                    ),
                });
            }
        }
        if let Some(f) = &a.fewshot {
            match (&f.from, &f.file) {
                (Some(_), Some(_)) => return Err(self.error(at("fewshot"), "set either `from` or `file`, not both")),
                (None, None) => return Err(self.error(at("fewshot"), "needs `from` or `file`")),
                _ => {}
            }
            if f.file.is_some() && (f.demos.is_some() || f.excerpt.is_some()) {
                return Err(self.error(at("fewshot"), "`demos` and `excerpt` only apply to generated blocks"));
            }
            if f.demos == Some(0) {
                return Err(self.error(at("fewshot"), "`demos` must be at least 1"));
            }
            if let Some([lo, hi]) = f.excerpt {
                if lo == 0 || lo > hi {
                    return Err(self.error(at("fewshot"), "`excerpt` must be [lo, hi] with 1 <= lo <= hi"));
                }
            }
        }
        Ok(())
    }

    fn validate_distill(&self, d: &DistillEntry) -> Result<(), ConfigError> {
        if d.preset.is_none() && d.datasets.is_empty() {
            return Err(self.error(Site::Distill("preset"), "set a `preset` or list [[distill.dataset]] entries"));
        }
        if d.preset.is_none() {
            for (k, set) in [("cb_arms", d.cb_arms.is_some()), ("cb_dim", d.cb_dim.is_some()), ("sizes", d.sizes.is_some())] {
                if set {
                    return Err(self.error(Site::Distill(k), "only applies to a preset"));
                }
            }
        }
        if d.preset.is_some() && self.config.movielens.is_none() {
            return Err(self.error(Site::Distill("preset"), "the paper-6 preset needs a [movielens] section"));
        }
        if d.cb_arms.is_some_and(|k| k < 2) {
            return Err(self.error(Site::Distill("cb_arms"), "needs at least 2 arms"));
        }
        if d.cb_dim == Some(0) {
            return Err(self.error(Site::Distill("cb_dim"), "must be at least 1"));
        }
        if let Some(s) = &d.sizes {
            for v in [s.mab_trajectories, s.mab_easy_steps, s.mab_hard_steps, s.cb_trajectories, s.cb_steps] {
                if v == Some(0) {
                    return Err(self.error(Site::Distill("sizes"), "sizes must be at least 1"));
                }
            }
        }
        let mut names: BTreeSet<&str> = BTreeSet::new();
        if d.preset.is_some() {
            names.extend(["mab-easiest-rh", "mab-easiest-ag", "mab-hardest-rh", "mab-hardest-ag", "cb-rh", "cb-ag"]);
        }
        for (i, ds) in d.datasets.iter().enumerate() {
            let at = |k| Site::Dataset(i, k);
            if !path_safe(&ds.name) {
                return Err(self.error(at("name"), format!("{:?} is not a valid file name", ds.name)));
            }
            if !names.insert(ds.name.as_str()) {
                return Err(self.error(at("name"), format!("duplicate dataset name {:?}", ds.name)));
            }
            if ds.task.preset.is_some() {
                return Err(self.error(at("task"), "datasets take a single task, not a preset"));
            }
            self.validate_task(&ds.task, &|_| Site::Dataset(i, "task"))?;
            if ds.trajectories == 0 {
                return Err(self.error(at("trajectories"), "must be at least 1"));
            }
            if ds.horizon == Some(0) {
                return Err(self.error(at("horizon"), "must be at least 1"));
            }
            if ds.alpha.is_some_and(|a| !(a >= 0.0 && a.is_finite())) {
                return Err(self.error(at("alpha"), "must be non-negative"));
            }
            if ds.textualization == Textualization::Sh && ds.task.kind != Some(TaskKind::Mab) {
                return Err(self.error(at("textualization"), "SH is only defined for multi-armed tasks"));
            }
            if ds.task.kind == Some(TaskKind::Linear) {
                return Err(self.error(at("task"), "datasets need a task with a prompt scenario"));
            }
        }
        Ok(())
    }
}

fn known_http_keys() -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = match toml::Value::try_from(HttpConfig::default()) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => BTreeSet::new(),
    };
    keys.insert("api_key_env".into());
    keys
}
