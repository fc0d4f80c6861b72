//! `explore gen-env`: materialise the configured tasks to JSON.

use std::path::PathBuf;

use explore_core::env::{Task, TaskFamily};
use explore_core::seed::fingerprint;
use serde::{Deserialize, Serialize};

use crate::config::Site;
use crate::run::{output_dir, prepare};
use crate::setup::resolve_tasks;
use crate::write_atomic;

pub const ENV_DIR: &str = "envs";

#[derive(Debug, Clone)]
pub struct GenEnvOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRecord {
    pub label: String,
    pub identity: String,
    pub family: TaskFamily,
    pub num_arms: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvIndex {
    pub fingerprint: String,
    pub envs: Vec<EnvRecord>,
}

/// Writes `envs/<label>.json` per task plus `envs/index.json`.
pub fn gen_env(opts: &GenEnvOptions) -> anyhow::Result<EnvIndex> {
    let loaded = prepare(&opts.config, opts.seed)?;
    if loaded.config.tasks.is_empty() {
        return Err(loaded.error(Site::Top("task"), "no [[task]] entries to generate").into());
    }
    let out = output_dir(&loaded, opts.out.as_deref())?;
    let dir = out.join(ENV_DIR);
    let tasks = resolve_tasks(&loaded, &out.join("data"))?;
    let mut envs = Vec::with_capacity(tasks.len());
    for t in &tasks {
        let body = match &t.task {
            Task::Mab(m) => serde_json::to_string_pretty(m.as_ref())?,
            Task::MovieLens(m) => serde_json::to_string_pretty(&serde_json::json!({
                "split": m.split,
                "instance": m.instance.as_ref(),
            }))?,
            Task::Linear(l) => serde_json::to_string_pretty(l.as_ref())?,
        };
        let file = format!("{}.json", t.label);
        write_atomic(&dir.join(&file), (body + "\n").as_bytes())?;
        envs.push(EnvRecord {
            label: t.label.clone(),
            identity: t.identity.clone(),
            family: t.family(),
            num_arms: t.task.num_arms(),
            horizon: t.horizon,
            delta_min: t.delta_min,
            file,
        });
    }
    let canonical = loaded.config.result_relevant().canonical()?;
    let index = EnvIndex {
        fingerprint: fingerprint(canonical.as_bytes()),
        envs,
    };
    write_atomic(&dir.join("index.json"), (serde_json::to_string_pretty(&index)? + "\n").as_bytes())?;
    Ok(index)
}
