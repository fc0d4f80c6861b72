//! The six-dataset distillation plan: the easiest and hardest Bernoulli
//! bandits plus the MovieLens task, each under raw and algorithm-guided
//! prompts.

use std::sync::Arc;

use super::{DatasetSpec, OracleSettings, CB_STEPS, CB_TRAJECTORIES, MAB_EASY_STEPS, MAB_HARD_STEPS, MAB_TRAJECTORIES};
use crate::env::{
    make_mab_instance, ActionDomain, CbInstance, Difficulty, MabConfig, MovieLensTask, RewardKind, Split, Task,
};
use crate::seed::derive_seed;
use crate::textual::{Scenario, Textualization};
use crate::Result;

/// A dataset ready for [`super::write_dataset`].
#[derive(Debug, Clone)]
pub struct PlannedDataset {
    pub task: Task,
    pub scenario: Scenario,
    pub spec: DatasetSpec,
}

/// Trajectory counts and lengths, overridable for smoke runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SixPlanSizes {
    pub mab_trajectories: usize,
    pub mab_easy_steps: usize,
    pub mab_hard_steps: usize,
    pub cb_trajectories: usize,
    pub cb_steps: usize,
}

impl Default for SixPlanSizes {
    fn default() -> Self {
        Self {
            mab_trajectories: MAB_TRAJECTORIES,
            mab_easy_steps: MAB_EASY_STEPS,
            mab_hard_steps: MAB_HARD_STEPS,
            cb_trajectories: CB_TRAJECTORIES,
            cb_steps: CB_STEPS,
        }
    }
}

/// RH and AG variants of one configuration share a seed, so both are
/// rendered from the same rollouts.
pub fn six_dataset_plan(seed: u64, movies: Arc<CbInstance>, sizes: SixPlanSizes) -> Result<Vec<PlannedDataset>> {
    let env_seed = derive_seed(seed, "distill-env", 0);
    let easiest = MabConfig::new(RewardKind::Bernoulli, Difficulty::Easy, 5, ActionDomain::Videos, env_seed);
    let hardest = MabConfig::new(RewardKind::Bernoulli, Difficulty::Hard, 20, ActionDomain::Clothes, env_seed);
    let cb_label = format!("movielens-k{}-d{}", movies.num_movies(), movies.embed_dim());

    let mut sources = Vec::new();
    for (tag, cfg, horizon) in [("mab-easiest", easiest, sizes.mab_easy_steps), ("mab-hardest", hardest, sizes.mab_hard_steps)] {
        let task = Task::Mab(Arc::new(make_mab_instance(cfg)?));
        sources.push((tag, cfg.label(), task, sizes.mab_trajectories, horizon));
    }
    let cb = Task::MovieLens(MovieLensTask {
        instance: movies,
        split: Split::Train,
    });
    sources.push(("cb", cb_label, cb, sizes.cb_trajectories, sizes.cb_steps));

    let mut out = Vec::with_capacity(6);
    for (tag, config, task, trajectories, horizon) in sources {
        let scenario = Scenario::for_task(&task)?;
        let settings = OracleSettings::for_task(&task);
        let rollout_seed = derive_seed(seed, &format!("distill-{config}"), 0);
        for t in [Textualization::Rh, Textualization::Ag] {
            out.push(PlannedDataset {
                task: task.clone(),
                scenario: scenario.clone(),
                spec: DatasetSpec {
                    name: format!("{tag}-{}", t.as_str().to_lowercase()),
                    config: config.clone(),
                    textualization: t,
                    trajectories,
                    horizon,
                    seed: rollout_seed,
                    settings,
                },
            });
        }
    }
    Ok(out)
}
