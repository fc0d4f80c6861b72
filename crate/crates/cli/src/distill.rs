//! `explore distill`: oracle demonstration datasets.

use std::path::{Path, PathBuf};

use anyhow::Context;
use explore_core::distill::{six_dataset_plan, write_dataset, DatasetManifest, DatasetSpec, OracleSettings, SixPlanSizes};
use explore_core::env::Split;
use explore_core::seed::{derive_seed, fingerprint};
use explore_core::textual::Scenario;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DistillEntry, Site, DEFAULT_CB_ARMS, DEFAULT_EMBED_DIM};
use crate::run::{output_dir, prepare};
use crate::setup::{single_task, MovieLensCache};
use crate::{write_atomic, Failure};

pub const INDEX_FILE: &str = "distill.json";

#[derive(Debug, Clone)]
pub struct DistillOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

impl DistillOptions {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            out: None,
            workers: None,
            seed: None,
        }
    }
}

/// Index of a distillation output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillIndex {
    /// Fingerprint of the canonical config.
    pub fingerprint: String,
    pub datasets: Vec<DatasetManifest>,
}

fn sizes(entry: &DistillEntry) -> SixPlanSizes {
    let mut s = SixPlanSizes::default();
    if let Some(o) = &entry.sizes {
        s.mab_trajectories = o.mab_trajectories.unwrap_or(s.mab_trajectories);
        s.mab_easy_steps = o.mab_easy_steps.unwrap_or(s.mab_easy_steps);
        s.mab_hard_steps = o.mab_hard_steps.unwrap_or(s.mab_hard_steps);
        s.cb_trajectories = o.cb_trajectories.unwrap_or(s.cb_trajectories);
        s.cb_steps = o.cb_steps.unwrap_or(s.cb_steps);
    }
    s
}

/// Writes every configured dataset into the output directory. Datasets are
/// generated in parallel; file contents depend only on the config.
pub fn distill(opts: &DistillOptions) -> anyhow::Result<DistillIndex> {
    let loaded = prepare(&opts.config, opts.seed)?;
    let entry = loaded
        .config
        .distill
        .clone()
        .ok_or_else(|| loaded.error(Site::Top("distill"), "the config has no [distill] section"))?;
    let out = output_dir(&loaded, opts.out.as_deref())?;
    let root = loaded.config.seed;
    let data_dir = out.join("data");
    let mut cache = MovieLensCache::new(&loaded, &data_dir);

    let mut planned = Vec::new();
    if entry.preset.is_some() {
        let movies = cache.instance(
            entry.cb_arms.unwrap_or(DEFAULT_CB_ARMS),
            entry.cb_dim.unwrap_or(DEFAULT_EMBED_DIM),
            Site::Distill("preset"),
        )?;
        for p in six_dataset_plan(root, movies, sizes(&entry))? {
            planned.push((p.task, p.scenario, p.spec));
        }
    }
    for (i, ds) in entry.datasets.iter().enumerate() {
        let task = single_task(&loaded, &ds.task, i, Split::Train, &mut cache, Site::Dataset(i, "task"))?;
        let scenario = Scenario::for_task(&task.task).map_err(|e| loaded.error(Site::Dataset(i, "task"), e.to_string()))?;
        let mut settings = OracleSettings::for_task(&task.task);
        if let Some(a) = ds.alpha {
            settings.alpha = a;
        }
        let spec = DatasetSpec {
            name: ds.name.clone(),
            config: task.identity.clone(),
            textualization: ds.textualization,
            trajectories: ds.trajectories,
            horizon: ds.horizon.unwrap_or(task.horizon),
            seed: derive_seed(root, &format!("distill-{}", ds.name), 0),
            settings,
        };
        planned.push((task.task, scenario, spec));
    }

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let workers = opts
        .workers
        .or(loaded.config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let results: Vec<Result<DatasetManifest, String>> = pool.install(|| {
        planned
            .par_iter()
            .map(|(task, scenario, spec)| {
                write_dataset(&out, task, scenario, spec).map_err(|e| format!("{}: {e}", spec.name))
            })
            .collect()
    });
    let mut datasets = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(m) => datasets.push(m),
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(Failure::partial(format!(
            "{} of {} datasets failed:\n  {}",
            failures.len(),
            planned.len(),
            failures.join("\n  ")
        ))
        .into());
    }
    let canonical = loaded.config.result_relevant().canonical()?;
    let index = DistillIndex {
        fingerprint: fingerprint(canonical.as_bytes()),
        datasets,
    };
    write_atomic(&out.join(INDEX_FILE), (serde_json::to_string_pretty(&index)? + "\n").as_bytes())?;
    Ok(index)
}

/// Reads a distillation index.
pub fn read_index(dir: &Path) -> anyhow::Result<DistillIndex> {
    let path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
