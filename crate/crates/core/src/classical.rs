//! Oracle bandit algorithms: UCB for multi-armed tasks, disjoint LinUCB for
//! linear contextual tasks, and epsilon-greedy as a linear-regret contrast.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_RIDGE: f64 = 1.0;

/// Exploration bonus. Arms that were never pulled carry an unbounded bonus,
/// kept out of arithmetic as a separate variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bonus {
    Finite(f64),
    Unbounded,
}

impl Bonus {
    pub fn finite(self) -> Option<f64> {
        match self {
            Bonus::Finite(v) => Some(v),
            Bonus::Unbounded => None,
        }
    }
}

/// Per-arm decomposition of an optimistic index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmValue {
    pub exploit: f64,
    pub explore: Bonus,
}

impl ArmValue {
    /// `exploit + explore`, unbounded when the bonus is.
    pub fn total(&self) -> Bonus {
        match self.explore {
            Bonus::Finite(b) => Bonus::Finite(self.exploit + b),
            Bonus::Unbounded => Bonus::Unbounded,
        }
    }
}

fn cmp_bonus(a: Bonus, b: Bonus) -> Ordering {
    match (a, b) {
        (Bonus::Unbounded, Bonus::Unbounded) => Ordering::Equal,
        (Bonus::Unbounded, _) => Ordering::Greater,
        (_, Bonus::Unbounded) => Ordering::Less,
        (Bonus::Finite(x), Bonus::Finite(y)) => x.total_cmp(&y),
    }
}

/// Argmax of `total()` with ties broken towards the lowest index.
pub fn argmax_values(values: &[ArmValue]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if cmp_bonus(values[i].total(), values[best].total()) == Ordering::Greater {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcbState {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    pub steps: u64,
    pub alpha: f64,
}

impl UcbState {
    pub fn new(num_arms: usize, alpha: f64) -> Self {
        Self {
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            steps: 0,
            alpha,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn mean(&self, arm: usize) -> Option<f64> {
        (self.counts[arm] > 0).then(|| self.sums[arm] / self.counts[arm] as f64)
    }

    /// `V_exploit = mean`, `V_explore = alpha * sqrt(ln t / N)`.
    pub fn values(&self) -> Vec<ArmValue> {
        let log_t = (self.steps.max(1) as f64).ln();
        (0..self.num_arms())
            .map(|a| match self.mean(a) {
                Some(mean) => ArmValue {
                    exploit: mean,
                    explore: Bonus::Finite(self.alpha * (log_t / self.counts[a] as f64).sqrt()),
                },
                None => ArmValue {
                    exploit: 0.0,
                    explore: Bonus::Unbounded,
                },
            })
            .collect()
    }

    pub fn select(&self) -> (usize, Vec<ArmValue>) {
        let values = self.values();
        (argmax_values(&values), values)
    }

    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        Error::check_index("arm", arm, self.num_arms())?;
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.steps += 1;
        Ok(())
    }

    /// Untried arms first (lowest index), then the highest empirical mean.
    pub fn greedy_arm(&self) -> usize {
        if let Some(a) = self.counts.iter().position(|&n| n == 0) {
            return a;
        }
        let mut best = 0;
        for a in 1..self.num_arms() {
            if self.mean(a).unwrap() > self.mean(best).unwrap() {
                best = a;
            }
        }
        best
    }
}

/// With probability `epsilon` a uniform arm, otherwise [`UcbState::greedy_arm`].
pub fn epsilon_greedy_select<R: Rng + ?Sized>(state: &UcbState, epsilon: f64, rng: &mut R) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Invalid(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if rng.random::<f64>() < epsilon {
        Ok(rng.random_range(0..state.num_arms()))
    } else {
        Ok(state.greedy_arm())
    }
}

/// Disjoint LinUCB: one ridge model per arm, kept in Gram form
/// `A_a = D_a^T D_a + lambda I`, `b_a = D_a^T r_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinUcbState {
    pub dim: usize,
    pub ridge: f64,
    pub alpha: f64,
    /// Row-major `dim x dim` Gram matrix per arm.
    pub gram: Vec<Vec<f64>>,
    pub response: Vec<Vec<f64>>,
    pub steps: u64,
}

impl LinUcbState {
    pub fn new(num_arms: usize, dim: usize, alpha: f64, ridge: f64) -> Result<Self> {
        if ridge <= 0.0 {
            return Err(Error::Invalid(format!("ridge {ridge} must be positive")));
        }
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = ridge;
        }
        Ok(Self {
            dim,
            ridge,
            alpha,
            gram: vec![eye; num_arms],
            response: vec![vec![0.0; dim]; num_arms],
            steps: 0,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.gram.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                what: "feature vector",
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn gram_matrix(&self, arm: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.gram[arm])
    }

    /// Ridge estimate `theta_a = A_a^{-1} b_a`.
    pub fn theta(&self, arm: usize) -> Result<Vec<f64>> {
        Error::check_index("arm", arm, self.num_arms())?;
        let chol = self
            .gram_matrix(arm)
            .cholesky()
            .ok_or_else(|| Error::Invalid("Gram matrix lost positive definiteness".into()))?;
        Ok(chol.solve(&DVector::from_column_slice(&self.response[arm])).iter().copied().collect())
    }

    pub fn arm_value(&self, arm: usize, x: &[f64]) -> Result<ArmValue> {
        Error::check_index("arm", arm, self.num_arms())?;
        self.check_dim(x)?;
        let chol = self
            .gram_matrix(arm)
            .cholesky()
            .ok_or_else(|| Error::Invalid("Gram matrix lost positive definiteness".into()))?;
        let xv = DVector::from_column_slice(x);
        let theta = chol.solve(&DVector::from_column_slice(&self.response[arm]));
        let a_inv_x = chol.solve(&xv);
        let width = xv.dot(&a_inv_x).max(0.0).sqrt();
        Ok(ArmValue {
            exploit: xv.dot(&theta),
            explore: Bonus::Finite(self.alpha * width),
        })
    }

    pub fn select(&self, features: &[Vec<f64>]) -> Result<(usize, Vec<ArmValue>)> {
        if features.len() != self.num_arms() {
            return Err(Error::Shape {
                what: "per-arm features",
                expected: self.num_arms(),
                got: features.len(),
            });
        }
        let values = features
            .iter()
            .enumerate()
            .map(|(a, x)| self.arm_value(a, x))
            .collect::<Result<Vec<_>>>()?;
        Ok((argmax_values(&values), values))
    }

    pub fn update(&mut self, arm: usize, x: &[f64], reward: f64) -> Result<()> {
        Error::check_index("arm", arm, self.num_arms())?;
        self.check_dim(x)?;
        let d = self.dim;
        let gram = &mut self.gram[arm];
        for i in 0..d {
            for j in 0..d {
                gram[i * d + j] += x[i] * x[j];
            }
        }
        for (b, xi) in self.response[arm].iter_mut().zip(x) {
            *b += reward * xi;
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn finite(b: Bonus) -> f64 {
        b.finite().expect("finite bonus")
    }

    #[test]
    fn unpulled_arms_go_first() {
        let state = UcbState::new(4, 1.0);
        let (arm, values) = state.select();
        assert_eq!(arm, 0);
        assert!(values.iter().all(|v| v.explore == Bonus::Unbounded));
    }

    #[test]
    fn two_arm_formula() {
        let mut s = UcbState::new(2, 1.0);
        s.update(0, 0.0).unwrap();
        s.update(0, 1.0).unwrap();
        s.update(1, 1.0).unwrap();
        let (arm, values) = s.select();
        // independent evaluation: 0.5 + sqrt(ln 3 / 2), 1.0 + sqrt(ln 3)
        let v0 = 0.5 + (3f64.ln() / 2.0).sqrt();
        let v1 = 1.0 + 3f64.ln().sqrt();
        assert!((finite(values[0].total()) - v0).abs() < 1e-12);
        assert!((finite(values[1].total()) - v1).abs() < 1e-12);
        assert!((v0 - 1.241).abs() < 5e-4 && (v1 - 2.048).abs() < 5e-4);
        assert_eq!(arm, 1);
    }

    #[test]
    fn zero_alpha_is_greedy() {
        let mut s = UcbState::new(2, 0.0);
        s.update(0, 0.9).unwrap();
        for _ in 0..5 {
            s.update(1, 0.1).unwrap();
        }
        assert_eq!(s.select().0, 0);
    }

    #[test]
    fn update_bookkeeping() {
        let mut s = UcbState::new(3, 1.0);
        s.update(0, 1.0).unwrap();
        assert_eq!((s.counts[0], s.mean(0)), (1, Some(1.0)));
        s.update(0, 0.0).unwrap();
        assert_eq!(s.mean(0), Some(0.5));
        assert!(s.update(3, 1.0).is_err());
    }

    #[test]
    fn replayed_updates_match_fold() {
        let mut rng = rng_from_seed(8);
        let script: Vec<(usize, f64)> = (0..300)
            .map(|_| (rng.random_range(0..5), rng.random::<f64>()))
            .collect();
        let mut s = UcbState::new(5, 1.0);
        for (a, r) in &script {
            s.update(*a, *r).unwrap();
        }
        let mut counts = [0u64; 5];
        let mut sums = [0.0; 5];
        for (a, r) in &script {
            counts[*a] += 1;
            sums[*a] += r;
        }
        assert_eq!(s.counts, counts.to_vec());
        assert_eq!(s.sums, sums.to_vec());
        assert_eq!(s.steps, 300);
        assert_eq!(s.counts.iter().sum::<u64>(), s.steps);
    }

    #[test]
    fn linucb_prior_values() {
        let s = LinUcbState::new(3, 2, 2.0, 1.0).unwrap();
        let x = vec![vec![1.0, 0.0]; 3];
        let (arm, values) = s.select(&x).unwrap();
        assert_eq!(arm, 0);
        for v in values {
            assert_eq!(v.exploit, 0.0);
            assert!((finite(v.explore) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linucb_one_dimensional_ridge() {
        let mut s = LinUcbState::new(1, 1, 1.5, 1.0).unwrap();
        s.update(0, &[1.0], 3.0).unwrap();
        // closed form: theta = (x r) / (x^2 + lambda) = 3 / 2
        assert!((s.theta(0).unwrap()[0] - 1.5).abs() < 1e-12);
        let v = s.arm_value(0, &[1.0]).unwrap();
        assert!((v.exploit - 1.5).abs() < 1e-12);
        assert!((finite(v.explore) - 1.5 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn linucb_width_shrinks_after_update() {
        let mut s = LinUcbState::new(1, 3, 1.0, 1.0).unwrap();
        let x = [0.3, -0.2, 0.9];
        let before = finite(s.arm_value(0, &x).unwrap().explore);
        s.update(0, &x, 1.0).unwrap();
        let after = finite(s.arm_value(0, &x).unwrap().explore);
        assert!(after < before);
    }

    #[test]
    fn linucb_zero_update_keeps_model() {
        let mut s = LinUcbState::new(2, 2, 1.0, 1.0).unwrap();
        let before = s.clone();
        s.update(1, &[0.0, 0.0], 4.0).unwrap();
        assert_eq!(s.gram, before.gram);
        assert_eq!(s.response, before.response);
        assert_eq!(s.steps, 1);
    }

    #[test]
    fn linucb_shape_errors() {
        let mut s = LinUcbState::new(2, 2, 1.0, 1.0).unwrap();
        assert!(matches!(s.update(0, &[1.0], 1.0), Err(Error::Shape { .. })));
        assert!(matches!(s.select(&[vec![1.0, 0.0]]), Err(Error::Shape { .. })));
    }

    #[test]
    fn linucb_incremental_matches_batch() {
        let mut rng = rng_from_seed(21);
        let d = 4;
        let mut s = LinUcbState::new(1, d, 1.0, 0.7).unwrap();
        let mut rows = Vec::new();
        let mut rewards = Vec::new();
        for _ in 0..60 {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let r = rng.random::<f64>() * 5.0;
            s.update(0, &x, r).unwrap();
            rows.push(x);
            rewards.push(r);
        }
        let design = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let batch = design.transpose() * &design + DMatrix::identity(d, d) * 0.7;
        let resp = design.transpose() * DVector::from_vec(rewards);
        let inc = s.gram_matrix(0);
        assert!((batch - &inc).abs().max() < 1e-9);
        assert!((&inc - inc.transpose()).abs().max() == 0.0);
        let inc_b = DVector::from_column_slice(&s.response[0]);
        assert!((resp - inc_b).abs().max() < 1e-9);
    }

    #[test]
    fn linucb_scalar_shrinks_mean() {
        // d = 1, x = 1: exploit equals N * mean / (N + lambda)
        let lambda = 2.0;
        let mut s = LinUcbState::new(1, 1, 1.0, lambda).unwrap();
        let rewards = [0.2, 1.0, 0.4, 0.9, 0.0, 0.7];
        for r in rewards {
            s.update(0, &[1.0], r).unwrap();
        }
        let n = rewards.len() as f64;
        let mean = rewards.iter().sum::<f64>() / n;
        let v = s.arm_value(0, &[1.0]).unwrap();
        assert!((v.exploit - n * mean / (n + lambda)).abs() < 1e-12);
    }

    #[test]
    fn epsilon_zero_is_greedy() {
        let mut s = UcbState::new(3, 1.0);
        for (a, r) in [(0, 0.1), (1, 0.8), (2, 0.4)] {
            s.update(a, r).unwrap();
        }
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy_select(&s, 0.0, &mut rng).unwrap(), s.greedy_arm());
        }
        assert_eq!(s.greedy_arm(), 1);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let s = UcbState::new(4, 1.0);
        let mut rng = rng_from_seed(2);
        let n = 100_000;
        let mut freq = [0usize; 4];
        for _ in 0..n {
            freq[epsilon_greedy_select(&s, 1.0, &mut rng).unwrap()] += 1;
        }
        for f in freq {
            assert!((f as f64 / n as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn epsilon_replay_is_deterministic() {
        let s = UcbState::new(5, 1.0);
        let draw = |seed| {
            let mut rng = rng_from_seed(seed);
            (0..50)
                .map(|_| epsilon_greedy_select(&s, 0.1, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert!(epsilon_greedy_select(&s, 1.5, &mut rng_from_seed(0)).is_err());
    }

    /// Straight-line restatement of the UCB index used as an oracle.
    fn reference_ucb(counts: &[u64], sums: &[f64], alpha: f64) -> Vec<f64> {
        let t: u64 = counts.iter().sum();
        counts
            .iter()
            .zip(sums)
            .map(|(&n, &s)| s / n as f64 + alpha * ((t as f64).ln() / n as f64).sqrt())
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn ucb_matches_reference(
            counts in proptest::collection::vec(1u64..50, 2..8),
            alpha in 0.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let mut rng = rng_from_seed(seed);
            let sums: Vec<f64> = counts.iter().map(|&n| rng.random::<f64>() * n as f64).collect();
            let state = UcbState {
                steps: counts.iter().sum(),
                counts: counts.clone(),
                sums: sums.clone(),
                alpha,
            };
            let expected = reference_ucb(&counts, &sums, alpha);
            let (arm, values) = state.select();
            for (v, e) in values.iter().zip(&expected) {
                prop_assert!((finite(v.total()) - e).abs() <= 1e-12);
            }
            let mut best = 0;
            for i in 1..expected.len() {
                if expected[i] > expected[best] { best = i; }
            }
            prop_assert_eq!(arm, best);
        }

        #[test]
        fn shared_bonus_scaling_keeps_argmax(
            means in proptest::collection::vec(0.0f64..1.0, 2..8),
            alpha in 0.0f64..10.0,
        ) {
            // equal counts give equal bonuses, so alpha cannot change the winner
            let k = means.len();
            let state = |alpha| UcbState {
                counts: vec![3; k],
                sums: means.iter().map(|m| m * 3.0).collect(),
                steps: 3 * k as u64,
                alpha,
            };
            prop_assert_eq!(state(alpha).select().0, state(1.0).select().0);
        }

        #[test]
        fn gram_stays_symmetric(
            xs in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 1..20)
        ) {
            let mut s = LinUcbState::new(1, 3, 1.0, 1.0).unwrap();
            for x in &xs {
                s.update(0, x, 1.0).unwrap();
            }
            let g = s.gram_matrix(0);
            prop_assert!((&g - g.transpose()).abs().max() == 0.0);
            prop_assert!(g.symmetric_eigenvalues().min() >= 1.0 - 1e-9);
        }
    }
}
