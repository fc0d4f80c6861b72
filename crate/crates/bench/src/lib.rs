//! Benchmark fixtures shared by the criterion benches.

use std::sync::Arc;

use explore_core::env::{make_mab_instance, ActionDomain, Difficulty, LinearCbTask, MabConfig, RewardKind, Task};

/// Bernoulli, hard, 20 arms: the largest multi-armed task.
pub fn hard_mab() -> Task {
    let cfg = MabConfig::new(RewardKind::Bernoulli, Difficulty::Hard, 20, ActionDomain::Clothes, 1);
    Task::Mab(Arc::new(make_mab_instance(cfg).expect("valid config")))
}

/// Linear contextual task with 30 arms in 5 dimensions.
pub fn linear_cb() -> Task {
    Task::Linear(Arc::new(LinearCbTask::generate(5, 30, 0.1, 1).expect("valid config")))
}

/// Noisy `log(t)^2` regret curve of length `n`.
pub fn log_curve(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|t| {
            let t = t as f64;
            2.0 * t.ln().powi(2) / 0.2 + 0.01 * (t * 12.9898).sin()
        })
        .collect()
}
