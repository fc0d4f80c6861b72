use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::seed::{derive_seed, rng_from_seed};
use crate::textual::names::make_action_names;
use crate::env::ActionDomain;
use crate::{Error, Result};

/// Synthetic linear-payoff contextual bandit: each step draws one feature
/// vector per arm and the expected reward is `x^T theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCbTask {
    pub theta: Vec<f64>,
    pub num_arms: usize,
    pub noise_sd: f64,
    pub action_names: Vec<String>,
}

impl LinearCbTask {
    /// `theta` is drawn uniformly on the unit sphere from `seed`.
    pub fn generate(dim: usize, num_arms: usize, noise_sd: f64, seed: u64) -> Result<Self> {
        if dim == 0 || num_arms < 2 {
            return Err(Error::Config(format!(
                "linear task needs dim >= 1 and at least two arms (dim={dim}, K={num_arms})"
            )));
        }
        let mut rng = rng_from_seed(derive_seed(seed, "linear-theta", 0));
        let theta = unit_vector(dim, &mut rng);
        let action_names = make_action_names(ActionDomain::Videos, num_arms, &mut rng)?;
        Ok(Self {
            theta,
            num_arms,
            noise_sd,
            action_names,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn draw_features<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        (0..self.num_arms)
            .map(|_| unit_vector(self.dim(), rng))
            .collect()
    }

    pub fn expected(&self, features: &[f64]) -> f64 {
        features.iter().zip(&self.theta).map(|(x, t)| x * t).sum()
    }

    pub fn realize<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> f64 {
        let mean = self.expected(features);
        if self.noise_sd > 0.0 {
            Normal::new(mean, self.noise_sd)
                .expect("finite noise")
                .sample(rng)
        } else {
            mean
        }
    }
}

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
