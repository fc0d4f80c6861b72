//! Task construction and simulation.

mod linear;
mod mab;
pub mod movielens;
pub mod synthetic;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use linear::LinearCbTask;
pub use mab::{
    make_mab_instance, ActionDomain, Difficulty, MabConfig, MabInstance, RewardKind,
};
pub(crate) use mab::argmax_lowest;
pub use movielens::{
    build_cb_instance, CbConfig, CbContext, CbInstance, CbMovie, CbUser, DatasetPaths, Gender, Split,
    UserProfile,
};

use crate::{Error, Result};

/// What the environment reveals before the agent acts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    /// Multi-armed bandits reveal nothing.
    None,
    /// A MovieLens user with profile and preference vector.
    User(CbContext),
    /// Synthetic contextual step; features live in [`StepContext`].
    Features,
}

impl Observation {
    pub fn user_index(&self) -> Option<usize> {
        match self {
            Observation::User(ctx) => Some(ctx.user),
            _ => None,
        }
    }
}

/// Everything needed to act on and score one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepContext {
    pub observation: Observation,
    /// Per-arm feature vectors for contextual tasks.
    pub features: Option<Vec<Vec<f64>>>,
    /// Per-arm expected reward given the observation.
    pub expected: Vec<f64>,
}

impl StepContext {
    pub fn optimal_arm(&self) -> usize {
        argmax_lowest(&self.expected)
    }

    pub fn optimal_expected(&self) -> f64 {
        self.expected[self.optimal_arm()]
    }
}

/// MovieLens task bound to one user split.
#[derive(Debug, Clone)]
pub struct MovieLensTask {
    pub instance: Arc<CbInstance>,
    pub split: Split,
}

/// A fully materialised, immutable task.
#[derive(Debug, Clone)]
pub enum Task {
    Mab(Arc<MabInstance>),
    MovieLens(MovieLensTask),
    Linear(Arc<LinearCbTask>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskFamily {
    Mab,
    Contextual,
}

impl Task {
    pub fn family(&self) -> TaskFamily {
        match self {
            Task::Mab(_) => TaskFamily::Mab,
            _ => TaskFamily::Contextual,
        }
    }

    pub fn num_arms(&self) -> usize {
        match self {
            Task::Mab(m) => m.num_arms(),
            Task::MovieLens(t) => t.instance.num_movies(),
            Task::Linear(l) => l.num_arms,
        }
    }

    /// Feature dimension for contextual tasks.
    pub fn feature_dim(&self) -> Option<usize> {
        match self {
            Task::Mab(_) => None,
            Task::MovieLens(t) => Some(t.instance.embed_dim()),
            Task::Linear(l) => Some(l.dim()),
        }
    }

    pub fn action_names(&self) -> Vec<String> {
        match self {
            Task::Mab(m) => m.action_names.clone(),
            Task::MovieLens(t) => t.instance.action_names(),
            Task::Linear(l) => l.action_names.clone(),
        }
    }

    /// Gap between best and second-best expected reward where it is a
    /// property of the task.
    pub fn min_gap(&self) -> Option<f64> {
        match self {
            Task::Mab(m) => Some(m.min_gap()),
            _ => None,
        }
    }

    pub fn next_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<StepContext> {
        match self {
            Task::Mab(m) => Ok(StepContext {
                observation: Observation::None,
                features: None,
                expected: m.means.clone(),
            }),
            Task::MovieLens(t) => {
                let ctx = t.instance.sample_user(t.split, rng)?;
                let expected = (0..t.instance.num_movies())
                    .map(|j| t.instance.cb_reward(ctx.user, j))
                    .collect::<Result<Vec<_>>>()?;
                let features = vec![ctx.preference.clone(); t.instance.num_movies()];
                Ok(StepContext {
                    observation: Observation::User(ctx),
                    features: Some(features),
                    expected,
                })
            }
            Task::Linear(l) => {
                let features = l.draw_features(rng);
                let expected = features.iter().map(|x| l.expected(x)).collect();
                Ok(StepContext {
                    observation: Observation::Features,
                    features: Some(features),
                    expected,
                })
            }
        }
    }

    /// Draws the realised reward for `arm` in `ctx`.
    pub fn realize<R: Rng + ?Sized>(&self, ctx: &StepContext, arm: usize, rng: &mut R) -> Result<f64> {
        Error::check_index("arm", arm, self.num_arms())?;
        match self {
            Task::Mab(m) => m.sample_reward(arm, rng),
            // noise-free ground truth
            Task::MovieLens(_) => Ok(ctx.expected[arm]),
            Task::Linear(l) => {
                let features = ctx.features.as_ref().expect("linear steps carry features");
                Ok(l.realize(&features[arm], rng))
            }
        }
    }
}
