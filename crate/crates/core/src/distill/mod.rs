//! Oracle rollouts packaged as few-shot demonstrations and fine-tuning
//! datasets.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{Agent, AgentPolicy};
use crate::classical::{argmax_values, ArmValue, Bonus, LinUcbState, UcbState, DEFAULT_ALPHA, DEFAULT_RIDGE};
use crate::env::{CbContext, Task, TaskFamily};
use crate::eval::{run_trial, TrialManifest};
use crate::seed::derive_seed;
use crate::textual::parse::{parse_raw_history, parse_side_info, parse_summary};
use crate::textual::{
    fewshot_header, render_excerpt, render_prompt, HistoryRecord, PromptInput, Scenario, SummaryStats,
    Textualization, FEWSHOT_SEPARATOR,
};
use crate::{Error, Result};

mod preset;

pub use preset::{six_dataset_plan, PlannedDataset, SixPlanSizes};

pub const MAB_EASY_STEPS: usize = 300;
pub const MAB_HARD_STEPS: usize = 1000;
pub const CB_STEPS: usize = 200;
pub const MAB_TRAJECTORIES: usize = 50;
pub const CB_TRAJECTORIES: usize = 200;
pub const DEFAULT_DEMOS: usize = 5;
pub const DEFAULT_EXCERPT_RANGE: (usize, usize) = (6, 12);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    Ucb,
    LinUcb,
}

impl Oracle {
    /// UCB for multi-armed tasks, LinUCB for contextual ones.
    pub fn for_family(family: TaskFamily) -> Self {
        match family {
            TaskFamily::Mab => Oracle::Ucb,
            TaskFamily::Contextual => Oracle::LinUcb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub oracle: Oracle,
    pub alpha: f64,
    pub ridge: f64,
}

impl OracleSettings {
    pub fn for_task(task: &Task) -> Self {
        Self {
            oracle: Oracle::for_family(task.family()),
            alpha: DEFAULT_ALPHA,
            ridge: DEFAULT_RIDGE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub arm: usize,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<usize>,
}

/// One oracle rollout, stored compactly; prompts are re-rendered on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTrajectory {
    pub config: String,
    pub textualization: Textualization,
    pub trajectory: usize,
    pub seed: u64,
    pub steps: Vec<TrajStep>,
}

fn check_pairing(task: &Task, oracle: Oracle) -> Result<()> {
    match (task.family(), oracle) {
        (TaskFamily::Mab, Oracle::Ucb) | (TaskFamily::Contextual, Oracle::LinUcb) => Ok(()),
        (family, oracle) => Err(Error::Config(format!("{oracle:?} oracle cannot drive a {family:?} task"))),
    }
}

/// `n` independent oracle rollouts of `horizon` steps.
pub fn generate_trajectories(
    task: &Task,
    settings: OracleSettings,
    config: &str,
    n: usize,
    horizon: usize,
    textualization: Textualization,
    seed: u64,
) -> Result<Vec<OracleTrajectory>> {
    check_pairing(task, settings.oracle)?;
    if textualization == Textualization::Sh && task.family() == TaskFamily::Contextual {
        return Err(Error::Config("summarized history is only defined for multi-armed tasks".into()));
    }
    (0..n)
        .map(|i| {
            let mut policy = match settings.oracle {
                Oracle::Ucb => AgentPolicy::ucb(),
                Oracle::LinUcb => AgentPolicy::linucb(),
            };
            policy.alpha = settings.alpha;
            policy.ridge = settings.ridge;
            let mut agent = Agent::new(policy, task, None)?;
            let trial_seed = derive_seed(seed, "distill-trajectory", i as u64);
            let manifest = TrialManifest {
                config: config.to_string(),
                agent: agent.fingerprint(),
                trial: i as u64,
                seed: trial_seed,
                horizon,
                num_arms: task.num_arms(),
                temperature: None,
            };
            let log = run_trial(&mut agent, task, manifest)?;
            Ok(OracleTrajectory {
                config: config.to_string(),
                textualization,
                trajectory: i,
                seed: trial_seed,
                steps: log
                    .steps
                    .iter()
                    .map(|s| TrajStep {
                        arm: s.arm,
                        reward: s.reward,
                        user: s.user,
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Oracle state replayed along a trajectory.
struct Replay<'a> {
    task: &'a Task,
    scenario: &'a Scenario,
    textualization: Textualization,
    ucb: UcbState,
    lin: Option<LinUcbState>,
    history: Vec<HistoryRecord>,
}

struct StepView {
    context: Option<CbContext>,
    features: Option<Vec<Vec<f64>>>,
    values: Vec<ArmValue>,
    stats: Option<SummaryStats>,
}

impl<'a> Replay<'a> {
    fn new(task: &'a Task, scenario: &'a Scenario, textualization: Textualization, settings: OracleSettings) -> Result<Self> {
        check_pairing(task, settings.oracle)?;
        let lin = match task.feature_dim() {
            Some(d) => Some(LinUcbState::new(task.num_arms(), d, settings.alpha, settings.ridge)?),
            None => None,
        };
        Ok(Self {
            task,
            scenario,
            textualization,
            ucb: UcbState::new(task.num_arms(), settings.alpha),
            lin,
            history: Vec::new(),
        })
    }

    fn view(&self, step: &TrajStep) -> Result<StepView> {
        match self.task {
            Task::Mab(_) => Ok(StepView {
                context: None,
                features: None,
                values: self.ucb.values(),
                stats: Some(SummaryStats::from_ucb(&self.ucb, self.textualization == Textualization::Ag)),
            }),
            Task::MovieLens(t) => {
                let user = step
                    .user
                    .ok_or_else(|| Error::Invalid("contextual trajectory step without a user".into()))?;
                let ctx = t.instance.context(user)?;
                let features = vec![ctx.preference.clone(); self.task.num_arms()];
                let lin = self.lin.as_ref().expect("contextual replay has LinUCB state");
                let values = (0..self.task.num_arms())
                    .map(|a| lin.arm_value(a, &features[a]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(StepView {
                    context: Some(ctx),
                    features: Some(features),
                    values,
                    stats: None,
                })
            }
            Task::Linear(_) => Err(Error::Config("synthetic linear tasks cannot be textualized".into())),
        }
    }

    fn input<'v>(&'v self, view: &'v StepView) -> PromptInput<'v> {
        PromptInput {
            history: &self.history,
            stats: view.stats.as_ref(),
            current: view.context.as_ref(),
            current_values: (self.textualization == Textualization::Ag && view.context.is_some())
                .then_some(view.values.as_slice()),
        }
    }

    fn advance(&mut self, step: &TrajStep, view: StepView) -> Result<()> {
        self.ucb.update(step.arm, step.reward)?;
        if let (Some(lin), Some(features)) = (self.lin.as_mut(), view.features.as_ref()) {
            lin.update(step.arm, &features[step.arm], step.reward)?;
        }
        let with_values = self.textualization == Textualization::Ag && view.context.is_some();
        self.history.push(HistoryRecord {
            step: self.history.len() + 1,
            context: view.context,
            arm: step.arm,
            action: self.scenario.action_names[step.arm].clone(),
            reward: step.reward,
            values: with_values.then_some(view.values),
        });
        Ok(())
    }
}

/// Recomputes the oracle's choice at every step from its own history and
/// reports the first step where it differs from the recorded action.
pub fn replay_check(task: &Task, settings: OracleSettings, trajectory: &OracleTrajectory) -> Result<()> {
    check_pairing(task, settings.oracle)?;
    let mut ucb = UcbState::new(task.num_arms(), settings.alpha);
    let mut lin = match task.feature_dim() {
        Some(d) => Some(LinUcbState::new(task.num_arms(), d, settings.alpha, settings.ridge)?),
        None => None,
    };
    for (t, step) in trajectory.steps.iter().enumerate() {
        let choice = match (task, lin.as_mut()) {
            (Task::MovieLens(m), Some(lin)) => {
                let ctx = m
                    .instance
                    .context(step.user.ok_or_else(|| Error::Invalid("step without a user".into()))?)?;
                let features = vec![ctx.preference; task.num_arms()];
                let (arm, _) = lin.select(&features)?;
                lin.update(step.arm, &features[step.arm], step.reward)?;
                arm
            }
            _ => {
                let (arm, _) = ucb.select();
                ucb.update(step.arm, step.reward)?;
                arm
            }
        };
        if choice != step.arm {
            return Err(Error::Invalid(format!(
                "trajectory {} step {}: oracle picks {choice}, recorded {}",
                trajectory.trajectory,
                t + 1,
                step.arm
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OftMeta {
    pub config: String,
    pub trajectory: usize,
    pub step: usize,
    pub textualization: Textualization,
}

/// One supervised pair: the prompt before a step and the oracle's action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OftRecord {
    pub prompt: String,
    pub completion: String,
    pub meta: OftMeta,
}

/// Renders every step of every trajectory and hands the records to `sink`
/// in order.
pub fn for_each_record<F>(
    task: &Task,
    scenario: &Scenario,
    settings: OracleSettings,
    trajectories: &[OracleTrajectory],
    fewshot: &str,
    mut sink: F,
) -> Result<usize>
where
    F: FnMut(OftRecord) -> Result<()>,
{
    let mut count = 0;
    for traj in trajectories {
        let mut replay = Replay::new(task, scenario, traj.textualization, settings)?;
        for (t, step) in traj.steps.iter().enumerate() {
            let view = replay.view(step)?;
            let prompt = render_prompt(scenario, traj.textualization, &replay.input(&view), fewshot)?;
            sink(OftRecord {
                prompt,
                completion: scenario.action_names[step.arm].clone(),
                meta: OftMeta {
                    config: traj.config.clone(),
                    trajectory: traj.trajectory,
                    step: t + 1,
                    textualization: traj.textualization,
                },
            })?;
            count += 1;
            replay.advance(step, view)?;
        }
    }
    Ok(count)
}

/// Streams records as JSON lines.
pub fn export_oft<W: Write>(
    task: &Task,
    scenario: &Scenario,
    settings: OracleSettings,
    trajectories: &[OracleTrajectory],
    out: W,
) -> Result<usize> {
    if trajectories.is_empty() {
        return Err(Error::Invalid("no trajectories to export".into()));
    }
    let mut out = out;
    for_each_record(task, scenario, settings, trajectories, "", |rec| {
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))
    })
}

/// Largest gap between two arms' totals that printed rounding can hide,
/// when each total is built from `terms` rounded numbers.
fn tolerance(decimals: Option<usize>, terms: i32) -> f64 {
    decimals.map_or(1e-9, |d| f64::from(terms) * 10f64.powi(-(d as i32)) + 1e-12)
}

fn consistent_with_values(values: &[ArmValue], arm: usize, tol: f64) -> bool {
    let best = argmax_values(values);
    match (values[best].total(), values[arm].total()) {
        (Bonus::Unbounded, Bonus::Unbounded) => {
            values.iter().position(|v| v.explore == Bonus::Unbounded) == Some(arm)
        }
        (Bonus::Unbounded, _) => false,
        (Bonus::Finite(b), Bonus::Finite(c)) => c >= b - tol,
        (Bonus::Finite(_), Bonus::Unbounded) => true,
    }
}

/// Checks a record against the statistics embedded in its own prompt.
///
/// AG prompts: the completion maximises the shown exploitation plus
/// exploration values, up to their printed rounding. SH prompts: the same
/// for a UCB index rebuilt from the shown counts and averages. MAB RH
/// prompts: UCB replayed over the listed rewards picks the completion
/// exactly. Contextual RH prompts show a window of the history only, so just
/// membership in the action list is checked.
pub fn check_record(scenario: &Scenario, alpha: f64, record: &OftRecord) -> Result<()> {
    let arm = scenario
        .action_index(&record.completion)
        .ok_or_else(|| Error::Invalid(format!("completion {:?} is not an action", record.completion)))?;
    if !record.prompt.contains(&record.completion) {
        return Err(Error::Invalid(format!("completion {:?} missing from its prompt", record.completion)));
    }
    let tol = tolerance(scenario.value_decimals, 2);
    let ok = match (record.meta.textualization, scenario.kind.is_contextual()) {
        (Textualization::Ag, true) => consistent_with_values(&parse_side_info(&record.prompt, scenario)?, arm, tol),
        (Textualization::Rh, true) => true,
        (Textualization::Sh, true) => return Err(Error::Invalid("contextual record with SH schema".into())),
        (Textualization::Ag, false) => {
            let summary = parse_summary(&record.prompt, scenario)?;
            let values = summary
                .arms
                .iter()
                .map(|a| a.value.ok_or_else(|| Error::Invalid("AG line without values".into())))
                .collect::<Result<Vec<_>>>()?;
            consistent_with_values(&values, arm, tol)
        }
        (Textualization::Sh, false) => {
            let summary = parse_summary(&record.prompt, scenario)?;
            let log_t = (summary.steps.max(1) as f64).ln();
            let values: Vec<ArmValue> = summary
                .arms
                .iter()
                .map(|a| ArmValue {
                    exploit: a.mean,
                    explore: if a.count == 0 {
                        Bonus::Unbounded
                    } else {
                        Bonus::Finite(alpha * (log_t / a.count as f64).sqrt())
                    },
                })
                .collect();
            consistent_with_values(&values, arm, tolerance(scenario.value_decimals, 1))
        }
        (Textualization::Rh, false) => {
            let mut ucb = UcbState::new(scenario.num_actions(), alpha);
            for (a, r) in parse_raw_history(&record.prompt, scenario)? {
                ucb.update(a, r)?;
            }
            ucb.select().0 == arm
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(format!(
            "trajectory {} step {}: {:?} is not the oracle's choice for its prompt",
            record.meta.trajectory, record.meta.step, record.completion
        )))
    }
}

/// Joins demonstration excerpts and their answers into a few-shot block.
/// An empty list gives an empty block.
pub fn assemble_fewshot(demos: &[(String, String)]) -> String {
    if demos.is_empty() {
        return String::new();
    }
    let mut out = String::from(fewshot_header());
    out.push('\n');
    for (excerpt, answer) in demos {
        out.push_str(FEWSHOT_SEPARATOR);
        out.push('\n');
        out.push_str(excerpt);
        out.push('\n');
        out.push_str(answer);
        out.push('\n');
    }
    out.push_str(FEWSHOT_SEPARATOR);
    out.push_str("\n\n");
    out
}

/// Samples `m` trajectories and from each a prefix whose length is drawn
/// from `excerpt_range`; the demonstration answer is the oracle's next
/// action. Excerpts are rendered with `scenario`'s action names, which may
/// belong to a different domain than the task the block is later used on.
pub fn build_fewshot_block<R: Rng + ?Sized>(
    task: &Task,
    scenario: &Scenario,
    settings: OracleSettings,
    trajectories: &[OracleTrajectory],
    m: usize,
    excerpt_range: (usize, usize),
    rng: &mut R,
) -> Result<String> {
    if m == 0 {
        return Ok(String::new());
    }
    if trajectories.is_empty() {
        return Err(Error::Invalid("empty demonstration pool".into()));
    }
    if m > trajectories.len() {
        return Err(Error::Config(format!(
            "{m} demonstrations requested from {} trajectories",
            trajectories.len()
        )));
    }
    let (lo, hi) = excerpt_range;
    if lo > hi {
        return Err(Error::Config(format!("empty excerpt range {lo}..={hi}")));
    }
    let mut demos = Vec::with_capacity(m);
    for idx in sample(rng, trajectories.len(), m).into_vec() {
        let traj = &trajectories[idx];
        let len = rng.random_range(lo..=hi);
        if len >= traj.steps.len() {
            return Err(Error::Config(format!(
                "excerpt of {len} steps needs a longer trajectory than {}",
                traj.steps.len()
            )));
        }
        let mut replay = Replay::new(task, scenario, traj.textualization, settings)?;
        for step in &traj.steps[..len] {
            let view = replay.view(step)?;
            replay.advance(step, view)?;
        }
        let next = &traj.steps[len];
        let view = replay.view(next)?;
        let excerpt = render_excerpt(scenario, traj.textualization, &replay.input(&view))?;
        demos.push((excerpt, scenario.action_names[next.arm].clone()));
    }
    Ok(assemble_fewshot(&demos))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub config: String,
    pub seed: u64,
    pub oracle: Oracle,
    pub alpha: f64,
    pub ridge: f64,
    pub textualization: Textualization,
    pub trajectories: usize,
    pub horizon: usize,
    pub records: usize,
    pub dataset_file: String,
    pub trajectories_file: String,
    /// SHA-256 of the dataset file.
    pub dataset_sha256: String,
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub name: String,
    pub config: String,
    pub textualization: Textualization,
    pub trajectories: usize,
    pub horizon: usize,
    pub seed: u64,
    pub settings: OracleSettings,
}

/// Generates trajectories and writes `<name>.jsonl`,
/// `<name>.trajectories.jsonl` and `<name>.manifest.json` under `dir`.
pub fn write_dataset(dir: &Path, task: &Task, scenario: &Scenario, spec: &DatasetSpec) -> Result<DatasetManifest> {
    let trajectories = generate_trajectories(
        task,
        spec.settings,
        &spec.config,
        spec.trajectories,
        spec.horizon,
        spec.textualization,
        spec.seed,
    )?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data_path = dir.join(format!("{}.jsonl", spec.name));
    let traj_path = dir.join(format!("{}.trajectories.jsonl", spec.name));

    let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let mut writer = HashingWriter {
        inner: BufWriter::new(file),
        hasher: Sha256::new(),
    };
    let records = export_oft(task, scenario, spec.settings, &trajectories, &mut writer)?;
    writer.flush().map_err(|e| Error::io(&data_path, e))?;
    let digest = hex::encode(writer.hasher.finalize());

    write_trajectories(&traj_path, &trajectories)?;

    let manifest = DatasetManifest {
        name: spec.name.clone(),
        config: spec.config.clone(),
        seed: spec.seed,
        oracle: spec.settings.oracle,
        alpha: spec.settings.alpha,
        ridge: spec.settings.ridge,
        textualization: spec.textualization,
        trajectories: trajectories.len(),
        horizon: spec.horizon,
        records,
        dataset_file: file_name(&data_path),
        trajectories_file: file_name(&traj_path),
        dataset_sha256: digest,
    };
    let manifest_path = dir.join(format!("{}.manifest.json", spec.name));
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn write_trajectories(path: &Path, trajectories: &[OracleTrajectory]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for t in trajectories {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<OracleTrajectory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, line)| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Ingest {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Dataset file paths recorded in a manifest, resolved against `dir`.
pub fn manifest_paths(dir: &Path, manifest: &DatasetManifest) -> (PathBuf, PathBuf) {
    (dir.join(&manifest.dataset_file), dir.join(&manifest.trajectories_file))
}
