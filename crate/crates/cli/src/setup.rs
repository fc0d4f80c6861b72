//! Turns config entries into tasks and agent bindings.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use explore_core::agent::{Agent, AgentPolicy, Backend, CassetteBackend, HttpBackend, MockBackend, PolicyKind};
use explore_core::distill::{build_fewshot_block, generate_trajectories, OracleSettings, DEFAULT_DEMOS, DEFAULT_EXCERPT_RANGE};
use explore_core::env::synthetic::write_corpus;
use explore_core::env::{
    build_cb_instance, make_mab_instance, ActionDomain, CbConfig, CbInstance, DatasetPaths, Difficulty,
    LinearCbTask, MabConfig, MovieLensTask, RewardKind, Split, Task, TaskFamily,
};
use explore_core::eval::{default_mab_horizon, DEFAULT_CB_HORIZON};
use explore_core::seed::{derive_seed, fingerprint, rng_from_seed};
use explore_core::textual::Scenario;
use serde::Serialize;

use crate::config::{
    AgentEntry, AppliesTo, BackendKind, FewshotSource, LoadedConfig, Site, SplitName, TaskEntry, TaskKind, TaskPreset,
    DEFAULT_CB_ARMS, DEFAULT_EMBED_DIM, DEFAULT_LINEAR_NOISE,
};
use crate::Failure;

/// Seed for environment construction under `root`.
pub fn env_seed(root: u64) -> u64 {
    derive_seed(root, "env", 0)
}

/// Seed of trial `trial` on the task labelled `label`. Every agent sees the
/// same seeds on a task.
pub fn trial_seed(root: u64, label: &str, trial: u64) -> u64 {
    derive_seed(derive_seed(root, "trial", 0), label, trial)
}

/// A task ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedTask {
    pub label: String,
    /// Label plus a fingerprint of everything that defines the task.
    pub identity: String,
    pub task: Task,
    pub horizon: usize,
    pub delta_min: Option<f64>,
    /// Index of the `[[task]]` entry it came from.
    pub entry: usize,
}

impl ResolvedTask {
    pub fn family(&self) -> TaskFamily {
        self.task.family()
    }
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum Identity<'a> {
    Mab(&'a MabConfig),
    Movielens {
        arms: usize,
        dim: usize,
        split: &'a str,
        user_split: f64,
        source: String,
        seed: u64,
    },
    Linear {
        arms: usize,
        dim: usize,
        noise: f64,
        seed: u64,
    },
}

fn identity(label: &str, id: &Identity<'_>) -> String {
    let json = serde_json::to_string(id).expect("task identity serializes");
    format!("{label}@{}", fingerprint(json.as_bytes()))
}

/// Builds MovieLens instances on demand and caches them by shape.
pub struct MovieLensCache<'a> {
    loaded: &'a LoadedConfig,
    data_dir: &'a Path,
    paths: Option<DatasetPaths>,
    instances: BTreeMap<(usize, usize), Arc<CbInstance>>,
}

impl<'a> MovieLensCache<'a> {
    pub fn new(loaded: &'a LoadedConfig, data_dir: &'a Path) -> Self {
        Self {
            loaded,
            data_dir,
            paths: None,
            instances: BTreeMap::new(),
        }
    }

    fn source_text(&self) -> String {
        match &self.loaded.config.movielens {
            Some(ml) => match (&ml.dir, &ml.synthetic) {
                (Some(dir), _) => format!("dir:{}", dir.display()),
                (_, Some(s)) => format!("synthetic:{}x{}", s.users, s.movies),
                _ => String::new(),
            },
            None => String::new(),
        }
    }

    fn paths(&mut self) -> anyhow::Result<DatasetPaths> {
        if let Some(p) = &self.paths {
            return Ok(p.clone());
        }
        let ml = self
            .loaded
            .config
            .movielens
            .as_ref()
            .ok_or_else(|| self.loaded.error(Site::Top("movielens"), "no [movielens] section"))?;
        let paths = match (&ml.dir, &ml.synthetic) {
            (Some(dir), _) => {
                let dir = self.loaded.resolve(dir);
                let paths = DatasetPaths::in_dir(&dir);
                for f in [&paths.ratings, &paths.users, &paths.movies] {
                    if !f.is_file() {
                        return Err(self
                            .loaded
                            .error(Site::MovieLens("dir"), format!("{} does not exist", f.display()))
                            .into());
                    }
                }
                paths
            }
            (_, Some(s)) => {
                let dir = self.data_dir.join("movielens-synthetic");
                let seed = derive_seed(self.loaded.config.seed, "corpus", 0);
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_corpus(&dir, s.users, s.movies, seed)?
            }
            _ => unreachable!("validated"),
        };
        self.paths = Some(paths.clone());
        Ok(paths)
    }

    pub fn instance(&mut self, arms: usize, dim: usize, site: Site<'_>) -> anyhow::Result<Arc<CbInstance>> {
        if let Some(i) = self.instances.get(&(arms, dim)) {
            return Ok(i.clone());
        }
        let dataset = self.paths()?;
        let user_split = self.loaded.config.movielens.as_ref().map_or(0.2, |m| m.user_split);
        let instance = build_cb_instance(CbConfig {
            num_actions: arms,
            embed_dim: dim,
            seed: env_seed(self.loaded.config.seed),
            dataset,
            user_split,
        })
        .map_err(|e| self.loaded.error(site, format!("cannot build the MovieLens task: {e}")))?;
        let instance = Arc::new(instance);
        self.instances.insert((arms, dim), instance.clone());
        Ok(instance)
    }
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Eval => "eval",
    }
}

/// Materialises one non-preset task entry.
pub fn single_task(
    loaded: &LoadedConfig,
    entry: &TaskEntry,
    index: usize,
    default_split: Split,
    cache: &mut MovieLensCache<'_>,
    site: Site<'_>,
) -> anyhow::Result<ResolvedTask> {
    let root = loaded.config.seed;
    let (label, identity, task, default_horizon) = match entry.kind {
        Some(TaskKind::Mab) => {
            let cfg = MabConfig::new(
                entry.reward.expect("validated"),
                entry.difficulty.expect("validated"),
                entry.arms.expect("validated"),
                entry.domain.unwrap_or(ActionDomain::Videos),
                env_seed(root),
            );
            let label = entry.name.clone().unwrap_or_else(|| cfg.label());
            let id = identity(&label, &Identity::Mab(&cfg));
            let instance = make_mab_instance(cfg).map_err(|e| loaded.error(site, e.to_string()))?;
            (label, id, Task::Mab(Arc::new(instance)), default_mab_horizon(cfg.num_arms))
        }
        Some(TaskKind::Movielens) => {
            let arms = entry.arms.unwrap_or(DEFAULT_CB_ARMS);
            let dim = entry.dim.unwrap_or(DEFAULT_EMBED_DIM);
            let split = match entry.split {
                Some(SplitName::Train) => Split::Train,
                Some(SplitName::Eval) => Split::Eval,
                None => default_split,
            };
            let label = entry
                .name
                .clone()
                .unwrap_or_else(|| format!("movielens-k{arms}-d{dim}-{}", split_name(split)));
            let id = identity(
                &label,
                &Identity::Movielens {
                    arms,
                    dim,
                    split: split_name(split),
                    user_split: loaded.config.movielens.as_ref().map_or(0.0, |m| m.user_split),
                    source: cache.source_text(),
                    seed: env_seed(root),
                },
            );
            let instance = cache.instance(arms, dim, site)?;
            (label, id, Task::MovieLens(MovieLensTask { instance, split }), DEFAULT_CB_HORIZON)
        }
        Some(TaskKind::Linear) => {
            let arms = entry.arms.expect("validated");
            let dim = entry.dim.expect("validated");
            let noise = entry.noise.unwrap_or(DEFAULT_LINEAR_NOISE);
            let label = entry.name.clone().unwrap_or_else(|| format!("linear-k{arms}-d{dim}"));
            let seed = derive_seed(env_seed(root), &label, 0);
            let id = identity(&label, &Identity::Linear { arms, dim, noise, seed });
            let task = LinearCbTask::generate(dim, arms, noise, seed).map_err(|e| loaded.error(site, e.to_string()))?;
            (label, id, Task::Linear(Arc::new(task)), DEFAULT_CB_HORIZON)
        }
        None => unreachable!("validated"),
    };
    Ok(ResolvedTask {
        delta_min: entry.delta_min.or(task.min_gap()),
        horizon: entry.horizon.unwrap_or(default_horizon),
        label,
        identity,
        task,
        entry: index,
    })
}

/// Materialises every `[[task]]` entry, expanding presets. Labels must be
/// unique across the run.
pub fn resolve_tasks(loaded: &LoadedConfig, data_dir: &Path) -> anyhow::Result<Vec<ResolvedTask>> {
    let mut cache = MovieLensCache::new(loaded, data_dir);
    let mut out: Vec<ResolvedTask> = Vec::new();
    for (i, entry) in loaded.config.tasks.iter().enumerate() {
        match entry.preset {
            Some(TaskPreset::MabFull16) => {
                for cfg in MabConfig::benchmark_suite(env_seed(loaded.config.seed)) {
                    let sub = TaskEntry {
                        kind: Some(TaskKind::Mab),
                        reward: Some(cfg.reward_kind),
                        difficulty: Some(cfg.difficulty),
                        arms: Some(cfg.num_arms),
                        domain: Some(cfg.action_domain),
                        horizon: entry.horizon,
                        ..TaskEntry::default()
                    };
                    out.push(single_task(loaded, &sub, i, Split::Eval, &mut cache, Site::Task(i, "preset"))?);
                }
            }
            Some(TaskPreset::Cb2) => {
                for arms in [10, 30] {
                    let sub = TaskEntry {
                        kind: Some(TaskKind::Movielens),
                        arms: Some(arms),
                        dim: Some(DEFAULT_EMBED_DIM),
                        split: Some(SplitName::Eval),
                        horizon: entry.horizon,
                        ..TaskEntry::default()
                    };
                    out.push(single_task(loaded, &sub, i, Split::Eval, &mut cache, Site::Task(i, "preset"))?);
                }
            }
            None => out.push(single_task(loaded, entry, i, Split::Eval, &mut cache, Site::Task(i, "kind"))?),
        }
    }
    let mut seen = BTreeMap::new();
    for t in &out {
        if let Some(prev) = seen.insert(t.label.clone(), t.entry) {
            let site = if loaded.config.tasks[t.entry].name.is_some() {
                Site::Task(t.entry, "name")
            } else {
                Site::Task(t.entry, "kind")
            };
            return Err(loaded
                .error(site, format!("task label {:?} already produced by task[{prev}]", t.label))
                .into());
        }
    }
    Ok(out)
}

/// Whether an agent runs on a task at all.
pub fn applies(agent: &AgentEntry, task: &Task) -> bool {
    match agent.scope() {
        AppliesTo::All => true,
        AppliesTo::Mab => task.family() == TaskFamily::Mab,
        AppliesTo::Cb => task.family() == TaskFamily::Contextual,
    }
}

/// Backends shared by every task an agent runs on, one slot per agent.
pub fn shared_backends(loaded: &LoadedConfig, allow_network: bool) -> anyhow::Result<Vec<Option<Arc<dyn Backend>>>> {
    loaded
        .config
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| -> anyhow::Result<Option<Arc<dyn Backend>>> {
            match a.backend {
                Some(BackendKind::Cassette) => {
                    let path = loaded.resolve(a.cassette.as_deref().expect("validated"));
                    let cassette = CassetteBackend::load(&path)
                        .map_err(|e| loaded.error(Site::Agent(i, "cassette"), e.to_string()))?;
                    Ok(Some(Arc::new(cassette)))
                }
                Some(BackendKind::Http) => {
                    if !allow_network {
                        return Err(loaded
                            .error(Site::Agent(i, "backend"), "live HTTP backends need --allow-network")
                            .into());
                    }
                    let cfg = a.http.clone().unwrap_or_default();
                    let backend = HttpBackend::new(cfg).map_err(|e| loaded.error(Site::Agent(i, "http"), e.to_string()))?;
                    Ok(Some(Arc::new(backend)))
                }
                _ => Ok(None),
            }
        })
        .collect()
}

/// Everything needed to start a fresh agent on one task.
#[derive(Clone)]
pub struct Binding {
    pub policy: AgentPolicy,
    pub backend: Option<Arc<dyn Backend>>,
    pub scenario: Option<Scenario>,
}

impl Binding {
    pub fn agent(&self, task: &Task) -> explore_core::Result<Agent> {
        Agent::with_scenario(self.policy.clone(), task, self.backend.clone(), self.scenario.clone())
    }
}

fn configure_scenario(agent: &AgentEntry, scenario: Scenario) -> Scenario {
    let scenario = if agent.full_precision {
        scenario.with_value_decimals(None)
    } else if let Some(d) = agent.value_decimals {
        scenario.with_value_decimals(Some(d))
    } else {
        scenario
    };
    match agent.history_window {
        Some(w) => scenario.with_history_window(Some(w)),
        None => scenario,
    }
}

fn fewshot_source(root: u64, source: FewshotSource, target: &ResolvedTask) -> anyhow::Result<(String, Task)> {
    let canned = |difficulty, arms, domain| -> anyhow::Result<(String, Task)> {
        let cfg = MabConfig::new(RewardKind::Bernoulli, difficulty, arms, domain, env_seed(root));
        Ok((cfg.label(), Task::Mab(Arc::new(make_mab_instance(cfg)?))))
    };
    match source {
        FewshotSource::Easiest => canned(Difficulty::Easy, 5, ActionDomain::Videos),
        FewshotSource::Hardest => canned(Difficulty::Hard, 20, ActionDomain::Clothes),
        FewshotSource::Same => match &target.task {
            Task::MovieLens(t) => Ok((
                target.label.clone(),
                Task::MovieLens(MovieLensTask {
                    instance: t.instance.clone(),
                    split: Split::Train,
                }),
            )),
            other => Ok((target.label.clone(), other.clone())),
        },
    }
}

/// Binds agent `index` to `task`, checking the pairing is legal.
pub fn bind(
    loaded: &LoadedConfig,
    index: usize,
    task: &ResolvedTask,
    shared: &[Option<Arc<dyn Backend>>],
) -> anyhow::Result<Binding> {
    let a = &loaded.config.agents[index];
    let mut policy = AgentPolicy {
        kind: a.policy,
        ..AgentPolicy::default()
    };
    if let Some(t) = a.textualization {
        policy.textualization = t;
    }
    if let Some(v) = a.alpha {
        policy.alpha = v;
    }
    if let Some(v) = a.ridge {
        policy.ridge = v;
    }
    if let Some(v) = a.epsilon {
        policy.epsilon = v;
    }
    if let Some(v) = a.temperature {
        policy.temperature = v;
    }
    if let Some(v) = a.retry_limit {
        policy.retry_limit = v;
    }
    policy.model = match (&a.model, &a.http) {
        (Some(m), _) => m.clone(),
        (None, Some(h)) => h.model.clone(),
        (None, None) => String::new(),
    };
    policy.check_binding(&task.task).map_err(|e| {
        loaded.error(
            Site::Agent(index, "policy"),
            format!("cannot run on task {:?}: {}", task.label, core_message(&e)),
        )
    })?;
    if !policy.kind.is_textual() {
        return Ok(Binding {
            policy,
            backend: None,
            scenario: None,
        });
    }

    let scenario = Scenario::for_task(&task.task)
        .map_err(|e| loaded.error(Site::Agent(index, "policy"), format!("task {:?}: {e}", task.label)))?;
    let scenario = configure_scenario(a, scenario);
    if let Some(f) = &a.fewshot {
        let block = match (&f.file, f.from) {
            (Some(file), _) => {
                let path = loaded.resolve(file);
                std::fs::read_to_string(&path)
                    .map_err(|e| loaded.error(Site::Agent(index, "fewshot"), format!("{}: {e}", path.display())))?
            }
            (None, Some(source)) => {
                let root = loaded.config.seed;
                let (source_label, source_task) = fewshot_source(root, source, task)?;
                let source_scenario = configure_scenario(a, Scenario::for_task(&source_task)?);
                let settings = OracleSettings::for_task(&source_task);
                let demos = f.demos.unwrap_or(DEFAULT_DEMOS);
                let (lo, hi) = f.excerpt.map_or(DEFAULT_EXCERPT_RANGE, |[lo, hi]| (lo, hi));
                let seed = derive_seed(root, &format!("fewshot-{}-{source_label}", a.name), 0);
                let trajectories = generate_trajectories(
                    &source_task,
                    settings,
                    &source_label,
                    demos,
                    hi + 1,
                    policy.textualization,
                    seed,
                )
                .map_err(|e| loaded.error(Site::Agent(index, "fewshot"), e.to_string()))?;
                build_fewshot_block(
                    &source_task,
                    &source_scenario,
                    settings,
                    &trajectories,
                    demos,
                    (lo, hi),
                    &mut rng_from_seed(derive_seed(seed, "pick", 0)),
                )
                .map_err(|e| loaded.error(Site::Agent(index, "fewshot"), e.to_string()))?
            }
            (None, None) => unreachable!("validated"),
        };
        policy.fewshot_block = Some(block);
    }

    let backend: Arc<dyn Backend> = match a.policy {
        PolicyKind::TextualMock => {
            let mut mock = MockBackend::new(scenario.clone(), policy.textualization);
            if let Some(alpha) = a.alpha {
                mock = mock.with_alpha(alpha);
            }
            Arc::new(mock)
        }
        _ => shared[index]
            .clone()
            .ok_or_else(|| Failure::validation(format!("agent {:?} has no backend", a.name)))?,
    };
    Ok(Binding {
        policy,
        backend: Some(backend),
        scenario: Some(scenario),
    })
}

/// Core config errors already say "configuration error"; keep just the
/// message.
fn core_message(e: &explore_core::Error) -> String {
    match e {
        explore_core::Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
