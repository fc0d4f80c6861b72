//! `explore run`: evaluate every agent on every task it applies to.

use std::path::{Path, PathBuf};

use anyhow::Context;
use explore_core::env::TaskFamily;
use explore_core::eval::{run_trial_logged, trial_manifest, TrialLog, TrialManifest};
use explore_core::seed::fingerprint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load_config, LoadedConfig, Site};
use crate::setup::{applies, bind, resolve_tasks, shared_backends, trial_seed, Binding, ResolvedTask};
use crate::{report, write_atomic, Failure};

pub const INDEX_FILE: &str = "run.json";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub resume: bool,
    pub seed: Option<u64>,
    pub allow_network: bool,
}

impl RunOptions {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            out: None,
            workers: None,
            resume: false,
            seed: None,
            allow_network: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub label: String,
    pub identity: String,
    pub family: TaskFamily,
    pub num_arms: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
}

/// One (task, agent) pairing and its trial count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub config: String,
    pub agent: String,
    pub trials: usize,
}

/// What a run directory is expected to contain; written before any trial
/// starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunIndex {
    /// Fingerprint of the canonical config.
    pub fingerprint: String,
    /// Canonical config text (output location and workers dropped).
    pub config: String,
    pub taint_threshold: f64,
    pub welch: bool,
    pub tasks: Vec<TaskRecord>,
    pub agents: Vec<String>,
    pub pairings: Vec<Pairing>,
}

impl RunIndex {
    pub fn read(run_dir: &Path) -> anyhow::Result<Self> {
        let path = run_dir.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::validation(format!("{} is not a run directory ({e})", run_dir.display())))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn task(&self, label: &str) -> Option<&TaskRecord> {
        self.tasks.iter().find(|t| t.label == label)
    }
}

/// Path of one trial log inside a run directory.
pub fn log_path(run_dir: &Path, config: &str, agent: &str, trial: usize) -> PathBuf {
    run_dir
        .join("logs")
        .join(config)
        .join(agent)
        .join(format!("trial-{trial}.jsonl"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub out: PathBuf,
    pub fingerprint: String,
    /// Trials run (or continued) by this invocation.
    pub executed: usize,
    /// Trials whose logs were already complete.
    pub reused: usize,
}

struct Job<'a> {
    task: &'a ResolvedTask,
    binding: &'a Binding,
    manifest: TrialManifest,
    path: PathBuf,
}

enum LogState {
    Missing,
    Partial,
    Complete,
}

fn log_state(path: &Path, expected: &TrialManifest) -> anyhow::Result<LogState> {
    if !path.exists() {
        return Ok(LogState::Missing);
    }
    let log = match TrialLog::read_jsonl(path) {
        Ok(log) => log,
        // a log killed before its header landed holds nothing to keep
        Err(_) if std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(false) => return Ok(LogState::Partial),
        Err(e) => return Err(e.into()),
    };
    if &log.manifest != expected {
        return Err(Failure::validation(format!(
            "{} was written by a different task or agent configuration",
            path.display()
        ))
        .into());
    }
    Ok(if log.is_complete() {
        LogState::Complete
    } else {
        LogState::Partial
    })
}

/// Loads and validates a config, applying a seed override.
pub fn prepare(config: &Path, seed: Option<u64>) -> anyhow::Result<LoadedConfig> {
    let mut loaded = load_config(config)?;
    if let Some(seed) = seed {
        loaded.config.seed = seed;
    }
    loaded.validate()?;
    Ok(loaded)
}

/// Resolves the output directory: the flag wins over the config key.
pub fn output_dir(loaded: &LoadedConfig, flag: Option<&Path>) -> anyhow::Result<PathBuf> {
    match (flag, &loaded.config.out) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(p)) => Ok(loaded.resolve(p)),
        (None, None) => Err(loaded
            .error(Site::Top("out"), "no output directory: set `out` or pass --out")
            .into()),
    }
}

pub fn run(opts: &RunOptions) -> anyhow::Result<RunSummary> {
    let loaded = prepare(&opts.config, opts.seed)?;
    let cfg = &loaded.config;
    if cfg.tasks.is_empty() {
        return Err(loaded.error(Site::Top("task"), "the run has no [[task]] entries").into());
    }
    if cfg.agents.is_empty() {
        return Err(loaded.error(Site::Top("agent"), "the run has no [[agent]] entries").into());
    }
    let out = output_dir(&loaded, opts.out.as_deref())?;
    let canonical = cfg.result_relevant().canonical()?;
    let run_fp = fingerprint(canonical.as_bytes());

    let tasks = resolve_tasks(&loaded, &out.join("data"))?;
    let backends = shared_backends(&loaded, opts.allow_network)?;
    let mut bindings: Vec<(usize, usize, Binding)> = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        for (ai, agent) in cfg.agents.iter().enumerate() {
            if applies(agent, &task.task) {
                bindings.push((ti, ai, bind(&loaded, ai, task, &backends)?));
            }
        }
    }
    for (ai, agent) in cfg.agents.iter().enumerate() {
        if !bindings.iter().any(|(_, a, _)| *a == ai) {
            return Err(loaded
                .error(Site::Agent(ai, "applies_to"), format!("agent {:?} applies to none of the tasks", agent.name))
                .into());
        }
    }

    let index = RunIndex {
        fingerprint: run_fp.clone(),
        config: canonical,
        taint_threshold: cfg.taint_threshold,
        welch: cfg.welch,
        tasks: tasks
            .iter()
            .map(|t| TaskRecord {
                label: t.label.clone(),
                identity: t.identity.clone(),
                family: t.family(),
                num_arms: t.task.num_arms(),
                horizon: t.horizon,
                delta_min: t.delta_min,
            })
            .collect(),
        agents: cfg.agents.iter().map(|a| a.name.clone()).collect(),
        pairings: bindings
            .iter()
            .map(|(ti, ai, _)| Pairing {
                config: tasks[*ti].label.clone(),
                agent: cfg.agents[*ai].name.clone(),
                trials: cfg.trials,
            })
            .collect(),
    };
    if out.join(INDEX_FILE).exists() {
        let existing = RunIndex::read(&out)?;
        if existing.fingerprint != run_fp {
            return Err(Failure::validation(format!(
                "{} holds run {} but this config is {}; use another --out",
                out.display(),
                existing.fingerprint,
                run_fp
            ))
            .into());
        }
    }

    let mut jobs = Vec::new();
    let mut reused = 0;
    let mut partial = Vec::new();
    for (ti, ai, binding) in &bindings {
        let task = &tasks[*ti];
        let name = &cfg.agents[*ai].name;
        // Fingerprints do not depend on agent state, one probe per pairing.
        let probe = binding.agent(&task.task)?;
        for trial in 0..cfg.trials {
            let seed = trial_seed(cfg.seed, &task.label, trial as u64);
            let manifest = trial_manifest(&probe, &task.task, &task.identity, trial as u64, seed, task.horizon);
            let path = log_path(&out, &task.label, name, trial);
            match log_state(&path, &manifest)? {
                LogState::Complete => reused += 1,
                state => {
                    if matches!(state, LogState::Partial) {
                        partial.push(path.clone());
                    }
                    jobs.push(Job {
                        task,
                        binding,
                        manifest,
                        path,
                    });
                }
            }
        }
    }
    if !partial.is_empty() && !opts.resume {
        return Err(Failure::validation(format!(
            "{} holds {} partial trial log(s), e.g. {}; pass --resume to continue them",
            out.display(),
            partial.len(),
            partial[0].display()
        ))
        .into());
    }
    write_atomic(&out.join(INDEX_FILE), (serde_json::to_string_pretty(&index)? + "\n").as_bytes())?;

    let workers = opts
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("starting the worker pool")?;
    let failures: Vec<String> = pool.install(|| {
        jobs.par_iter()
            .filter_map(|job| run_job(job).err().map(|e| format!("{}: {e:#}", job.path.display())))
            .collect()
    });
    if !failures.is_empty() {
        let shown: Vec<&str> = failures.iter().take(10).map(String::as_str).collect();
        return Err(Failure::partial(format!(
            "{} of {} trials failed:\n  {}",
            failures.len(),
            jobs.len(),
            shown.join("\n  ")
        ))
        .into());
    }
    report::write_report(&out)?;
    Ok(RunSummary {
        out,
        fingerprint: run_fp,
        executed: jobs.len(),
        reused,
    })
}

fn run_job(job: &Job<'_>) -> anyhow::Result<()> {
    if let Some(dir) = job.path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut agent = job.binding.agent(&job.task.task)?;
    let resume = job.path.exists() && std::fs::metadata(&job.path)?.len() > 0;
    run_trial_logged(&mut agent, &job.task.task, job.manifest.clone(), &job.path, resume)?;
    Ok(())
}
