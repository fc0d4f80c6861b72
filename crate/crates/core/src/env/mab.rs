use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed::{derive_seed, rng_from_seed};
use crate::textual::names::make_action_names;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Bernoulli,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionDomain {
    Videos,
    Clothes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MabConfig {
    pub reward_kind: RewardKind,
    pub num_arms: usize,
    pub difficulty: Difficulty,
    pub action_domain: ActionDomain,
    pub seed: u64,
}

impl MabConfig {
    pub fn new(
        reward_kind: RewardKind,
        difficulty: Difficulty,
        num_arms: usize,
        action_domain: ActionDomain,
        seed: u64,
    ) -> Self {
        Self {
            reward_kind,
            num_arms,
            difficulty,
            action_domain,
            seed,
        }
    }

    /// Gap between the best and every other arm (Bernoulli only).
    pub fn gap(&self) -> Option<f64> {
        match (self.reward_kind, self.difficulty) {
            (RewardKind::Bernoulli, Difficulty::Easy) => Some(0.5),
            (RewardKind::Bernoulli, Difficulty::Hard) => Some(0.2),
            (RewardKind::Gaussian, _) => None,
        }
    }

    /// Reward noise and prior scale (Gaussian only).
    pub fn sigma(&self) -> Option<f64> {
        match (self.reward_kind, self.difficulty) {
            (RewardKind::Gaussian, Difficulty::Easy) => Some(1.0),
            (RewardKind::Gaussian, Difficulty::Hard) => Some(3.0),
            (RewardKind::Bernoulli, _) => None,
        }
    }

    /// Canonical label, e.g. `bernoulli-easy-k5-videos`.
    pub fn label(&self) -> String {
        let kind = match self.reward_kind {
            RewardKind::Bernoulli => "bernoulli",
            RewardKind::Gaussian => "gaussian",
        };
        let difficulty = match self.difficulty {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        };
        let domain = match self.action_domain {
            ActionDomain::Videos => "videos",
            ActionDomain::Clothes => "clothes",
        };
        format!("{kind}-{difficulty}-k{}-{domain}", self.num_arms)
    }

    /// The 16 benchmark configurations: reward kind x difficulty x K in {5, 20}
    /// x action domain.
    pub fn benchmark_suite(seed: u64) -> Vec<MabConfig> {
        let mut out = Vec::with_capacity(16);
        for reward_kind in [RewardKind::Bernoulli, RewardKind::Gaussian] {
            for difficulty in [Difficulty::Easy, Difficulty::Hard] {
                for num_arms in [5, 20] {
                    for action_domain in [ActionDomain::Videos, ActionDomain::Clothes] {
                        out.push(MabConfig::new(
                            reward_kind,
                            difficulty,
                            num_arms,
                            action_domain,
                            seed,
                        ));
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.num_arms <= 1 {
            return Err(Error::Config(format!(
                "a bandit needs at least two arms, got K={}",
                self.num_arms
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabInstance {
    pub config: MabConfig,
    /// Per-arm expected reward (Bernoulli success probability or Gaussian mean).
    pub means: Vec<f64>,
    /// Shared reward standard deviation, Gaussian instances only.
    pub sigma: Option<f64>,
    pub action_names: Vec<String>,
    pub best_arm: usize,
}

pub fn make_mab_instance(config: MabConfig) -> Result<MabInstance> {
    config.validate()?;
    let k = config.num_arms;
    let mut rng = rng_from_seed(derive_seed(config.seed, "mab-instance", 0));
    let (means, sigma, best_arm) = match config.reward_kind {
        RewardKind::Bernoulli => {
            let gap = config.gap().expect("bernoulli has a gap");
            let best = rng.random_range(0..k);
            let means = (0..k)
                .map(|a| if a == best { 0.5 + gap / 2.0 } else { 0.5 - gap / 2.0 })
                .collect();
            (means, None, best)
        }
        RewardKind::Gaussian => {
            let sigma = config.sigma().expect("gaussian has a sigma");
            let prior = Normal::new(0.0, sigma).expect("sigma is positive");
            let means: Vec<f64> = (0..k).map(|_| prior.sample(&mut rng)).collect();
            (means.clone(), Some(sigma), argmax_lowest(&means))
        }
    };
    let action_names = make_action_names(config.action_domain, k, &mut rng)?;
    Ok(MabInstance {
        config,
        means,
        sigma,
        action_names,
        best_arm,
    })
}

/// Index of the maximum, lowest index on ties.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl MabInstance {
    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn expected_reward(&self, arm: usize) -> Result<f64> {
        Error::check_index("arm", arm, self.num_arms())?;
        Ok(self.means[arm])
    }

    pub fn best_mean(&self) -> f64 {
        self.means[self.best_arm]
    }

    /// Gap between the best and second-best arm means. Bernoulli
    /// instances report their configured gap exactly rather than the
    /// rounded difference of the means.
    pub fn min_gap(&self) -> f64 {
        if let Some(gap) = self.config.gap() {
            return gap;
        }
        let best = self.best_mean();
        let second = self
            .means
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.best_arm)
            .map(|(_, m)| *m)
            .fold(f64::NEG_INFINITY, f64::max);
        best - second
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> Result<f64> {
        let mean = self.expected_reward(arm)?;
        Ok(match self.config.reward_kind {
            RewardKind::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardKind::Gaussian => {
                let sigma = self.sigma.unwrap_or(1.0);
                Normal::new(mean, sigma)
                    .map_err(|e| Error::Config(e.to_string()))?
                    .sample(rng)
            }
        })
    }
}
