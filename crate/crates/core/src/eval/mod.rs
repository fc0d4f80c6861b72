//! Trial execution, regret curves and exploration diagnostics.

mod winrate;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::env::{Observation, StepContext, Task};
use crate::seed::{derive_seed, step_rng};
use crate::{Error, Result};

pub use winrate::{pairwise_winrate, student_t_test, Outcome, RewardTable, TTest, WinMatrix, WinRateOptions};

/// Canonical horizon for a multi-armed task with `k` arms.
pub fn default_mab_horizon(k: usize) -> usize {
    if k >= 20 {
        1000
    } else {
        200
    }
}

pub const DEFAULT_CB_HORIZON: usize = 200;
pub const DEFAULT_TRIALS: usize = 30;
pub const DEFAULT_TAINT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialManifest {
    /// Fingerprint of the task configuration.
    pub config: String,
    /// Fingerprint of the agent (policy plus backend).
    pub agent: String,
    pub trial: u64,
    pub seed: u64,
    pub horizon: usize,
    pub num_arms: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<usize>,
    pub arm: usize,
    pub reward: f64,
    /// Expected reward of the chosen arm given the observation.
    pub expected: f64,
    pub optimal_arm: usize,
    pub optimal_expected: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub retries: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl StepRecord {
    pub fn is_optimal(&self) -> bool {
        self.arm == self.optimal_arm || self.expected >= self.optimal_expected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub manifest: TrialManifest,
    pub steps: Vec<StepRecord>,
}

impl TrialLog {
    pub fn is_complete(&self) -> bool {
        self.steps.len() == self.manifest.horizon
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn total_expected_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.expected).sum()
    }

    pub fn fallback_rate(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.fallback).count() as f64 / self.steps.len() as f64
    }

    pub fn is_tainted(&self, threshold: f64) -> bool {
        self.fallback_rate() > threshold
    }

    /// Writes the manifest line followed by one line per step.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", serde_json::to_string(&ManifestLine { manifest: &self.manifest })?)
            .map_err(|e| Error::io("<trial log>", e))?;
        for s in &self.steps {
            writeln!(out, "{}", serde_json::to_string(s)?).map_err(|e| Error::io("<trial log>", e))?;
        }
        Ok(())
    }

    /// Reads a log, keeping the longest valid prefix of step lines (a torn
    /// final line from an interrupted run is dropped).
    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Ingest {
                path: path.to_path_buf(),
                line: 1,
                message: "empty trial log".into(),
            })?
            .map_err(|e| Error::io(path, e))?;
        let header: OwnedManifestLine = serde_json::from_str(&first).map_err(|e| Error::Ingest {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?;
        let mut steps = Vec::new();
        for line in lines {
            let Ok(line) = line else { break };
            match serde_json::from_str::<StepRecord>(&line) {
                Ok(s) if s.step == steps.len() + 1 => steps.push(s),
                _ => break,
            }
        }
        Ok(Self {
            manifest: header.manifest,
            steps,
        })
    }
}

#[derive(Serialize)]
struct ManifestLine<'a> {
    manifest: &'a TrialManifest,
}

#[derive(Deserialize)]
struct OwnedManifestLine {
    manifest: TrialManifest,
}

struct StepSeeds {
    context: u64,
    agent: u64,
    reward: u64,
}

impl StepSeeds {
    fn new(trial_seed: u64) -> Self {
        Self {
            context: derive_seed(trial_seed, "context", 0),
            agent: derive_seed(trial_seed, "agent", 0),
            reward: derive_seed(trial_seed, "reward", 0),
        }
    }
}

fn record(t: usize, ctx: &StepContext, arm: usize, reward: f64, fallback: bool, retries: u32) -> StepRecord {
    let optimal_arm = ctx.optimal_arm();
    StepRecord {
        step: t + 1,
        user: match &ctx.observation {
            Observation::User(c) => Some(c.user),
            _ => None,
        },
        arm,
        reward,
        expected: ctx.expected[arm],
        optimal_arm,
        optimal_expected: ctx.expected[optimal_arm],
        fallback,
        retries,
    }
}

fn run_steps(
    agent: &mut Agent,
    task: &Task,
    log: &mut TrialLog,
    mut sink: Option<&mut dyn Write>,
) -> Result<()> {
    let seeds = StepSeeds::new(log.manifest.seed);
    for t in log.steps.len()..log.manifest.horizon {
        let ctx = task.next_context(&mut step_rng(seeds.context, t as u64))?;
        let decision = agent.act(&ctx, &mut step_rng(seeds.agent, t as u64))?;
        let reward = task.realize(&ctx, decision.arm, &mut step_rng(seeds.reward, t as u64))?;
        agent.observe(&ctx, decision.arm, reward)?;
        let rec = record(t, &ctx, decision.arm, reward, decision.fallback, decision.retries);
        if let Some(out) = sink.as_deref_mut() {
            writeln!(out, "{}", serde_json::to_string(&rec)?)
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<trial log>", e))?;
        }
        log.steps.push(rec);
    }
    Ok(())
}

/// Builds the manifest for a trial of `agent` on `task`.
pub fn trial_manifest(agent: &Agent, task: &Task, config: &str, trial: u64, seed: u64, horizon: usize) -> TrialManifest {
    TrialManifest {
        config: config.to_string(),
        agent: agent.fingerprint(),
        trial,
        seed,
        horizon,
        num_arms: task.num_arms(),
        temperature: agent.policy().kind.is_textual().then_some(agent.policy().temperature),
    }
}

/// Runs one trial in memory. Every step draws from its own seeded streams,
/// so equal inputs give bitwise-identical logs.
pub fn run_trial(agent: &mut Agent, task: &Task, manifest: TrialManifest) -> Result<TrialLog> {
    let mut log = TrialLog {
        manifest,
        steps: Vec::new(),
    };
    run_steps(agent, task, &mut log, None)?;
    Ok(log)
}

/// Runs one trial while persisting every step to `path`. With `resume`, a
/// complete log is returned as is and a partial one is replayed into the
/// agent and continued from its last step.
pub fn run_trial_logged(
    agent: &mut Agent,
    task: &Task,
    manifest: TrialManifest,
    path: &Path,
    resume: bool,
) -> Result<TrialLog> {
    let mut log = TrialLog {
        manifest: manifest.clone(),
        steps: Vec::new(),
    };
    if resume && path.exists() {
        let existing = TrialLog::read_jsonl(path)?;
        if existing.manifest != manifest {
            return Err(Error::Config(format!(
                "{} was produced by a different configuration",
                path.display()
            )));
        }
        if existing.is_complete() {
            return Ok(existing);
        }
        let seeds = StepSeeds::new(manifest.seed);
        for (t, s) in existing.steps.iter().enumerate() {
            let ctx = task.next_context(&mut step_rng(seeds.context, t as u64))?;
            if s.arm >= ctx.expected.len() || ctx.expected[s.arm] != s.expected {
                return Err(Error::Invalid(format!(
                    "{} step {} does not match the task",
                    path.display(),
                    s.step
                )));
            }
            agent.replay(&ctx, s.arm, s.reward)?;
        }
        log.steps = existing.steps;
    }
    let tmp = path.with_extension("partial");
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut out = BufWriter::new(file);
    log.write_jsonl(&mut out)?;
    out.flush().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    let file = std::fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    run_steps(agent, task, &mut log, Some(&mut out))?;
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(log)
}

/// Cumulative pseudo-regret: prefix sums of the expected shortfall.
pub fn cumulative_regret(log: &TrialLog) -> Vec<f64> {
    let mut total = 0.0;
    log.steps
        .iter()
        .map(|s| {
            total += (s.optimal_expected - s.expected).max(0.0);
            total
        })
        .collect()
}

/// Trial-averaged cumulative pseudo-regret; logs must share a horizon.
pub fn mean_regret_curve(logs: &[TrialLog]) -> Result<Vec<f64>> {
    let first = logs.first().ok_or_else(|| Error::Invalid("no logs to average".into()))?;
    let n = first.steps.len();
    let mut acc = vec![0.0; n];
    for log in logs {
        if log.steps.len() != n {
            return Err(Error::Shape {
                what: "trial length",
                expected: n,
                got: log.steps.len(),
            });
        }
        for (a, r) in acc.iter_mut().zip(cumulative_regret(log)) {
            *a += r;
        }
    }
    let m = logs.len() as f64;
    Ok(acc.into_iter().map(|v| v / m).collect())
}

/// Steps at 10%, 25%, 50%, 75% and 100% of the horizon.
pub fn canonical_checkpoints(horizon: usize) -> Vec<usize> {
    [0.10, 0.25, 0.50, 0.75, 1.0]
        .iter()
        .map(|f| ((horizon as f64 * f).round() as usize).clamp(1, horizon.max(1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationMetrics {
    pub checkpoints: Vec<usize>,
    /// min_a N_t(a) / t.
    pub min_frac: Vec<f64>,
    /// K * min_a N_t(a) / t, which is 1 under perfectly uniform play.
    pub min_frac_normalized: Vec<f64>,
    /// Share of the first t pulls that went to an optimal arm.
    pub opt_frac: Vec<f64>,
}

/// MinFrac and OptFrac at each checkpoint, averaged over trials.
pub fn exploration_metrics(logs: &[TrialLog], checkpoints: &[usize]) -> Result<ExplorationMetrics> {
    if logs.is_empty() {
        return Err(Error::Invalid("no logs for exploration metrics".into()));
    }
    let mut min_frac = vec![0.0; checkpoints.len()];
    let mut min_norm = vec![0.0; checkpoints.len()];
    let mut opt_frac = vec![0.0; checkpoints.len()];
    for log in logs {
        let k = log.manifest.num_arms;
        if let Some(&bad) = checkpoints.iter().find(|&&c| c == 0 || c > log.steps.len()) {
            return Err(Error::Invalid(format!(
                "checkpoint {bad} outside [1, {}]",
                log.steps.len()
            )));
        }
        let mut counts = vec![0usize; k];
        let mut optimal = 0usize;
        let mut next = 0;
        let mut order: Vec<usize> = (0..checkpoints.len()).collect();
        order.sort_by_key(|&i| checkpoints[i]);
        for (t, s) in log.steps.iter().enumerate() {
            counts[s.arm] += 1;
            optimal += usize::from(s.is_optimal());
            while next < order.len() && checkpoints[order[next]] == t + 1 {
                let i = order[next];
                let tf = (t + 1) as f64;
                let m = *counts.iter().min().unwrap_or(&0) as f64 / tf;
                min_frac[i] += m;
                min_norm[i] += m * k as f64;
                opt_frac[i] += optimal as f64 / tf;
                next += 1;
            }
        }
    }
    let n = logs.len() as f64;
    let avg = |v: Vec<f64>| v.into_iter().map(|x| x / n).collect();
    Ok(ExplorationMetrics {
        checkpoints: checkpoints.to_vec(),
        min_frac: avg(min_frac),
        min_frac_normalized: avg(min_norm),
        opt_frac: avg(opt_frac),
    })
}
