use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Win,
    Loss,
    Inconclusive,
}

impl Outcome {
    pub fn flip(self) -> Self {
        match self {
            Outcome::Win => Outcome::Loss,
            Outcome::Loss => Outcome::Win,
            Outcome::Inconclusive => Outcome::Inconclusive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinRateOptions {
    pub p_threshold: f64,
    /// Unequal-variance t-test instead of the pooled one.
    pub welch: bool,
}

impl Default for WinRateOptions {
    fn default() -> Self {
        Self {
            p_threshold: 0.05,
            welch: false,
        }
    }
}

/// Reward samples per model and configuration: `samples[model][config]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub models: Vec<String>,
    pub configs: Vec<String>,
    pub samples: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sided two-sample t-test. `None` when both samples have zero
/// variance, where the statistic is undefined.
pub fn student_t_test(a: &[f64], b: &[f64], welch: bool) -> Option<TTest> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (se, df) = if welch {
        let (qa, qb) = (va / na, vb / nb);
        let se = (qa + qb).sqrt();
        let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
        (se, df)
    } else {
        let df = na + nb - 2.0;
        let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
        ((pooled * (1.0 / na + 1.0 / nb)).sqrt(), df)
    };
    if se == 0.0 || !se.is_finite() {
        return None;
    }
    let t = (ma - mb) / se;
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Some(TTest { t, df, p })
}

fn compare(a: &[f64], b: &[f64], opts: &WinRateOptions) -> Outcome {
    let (ma, _) = mean_var(a);
    let (mb, _) = mean_var(b);
    let significant = match student_t_test(a, b, opts.welch) {
        Some(test) => test.p < opts.p_threshold,
        None => ma != mb,
    };
    match (significant, ma.partial_cmp(&mb)) {
        (true, Some(std::cmp::Ordering::Greater)) => Outcome::Win,
        (true, Some(std::cmp::Ordering::Less)) => Outcome::Loss,
        _ => Outcome::Inconclusive,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinMatrix {
    pub models: Vec<String>,
    pub configs: Vec<String>,
    /// `outcomes[a][b][c]`: result of model `a` against `b` on config `c`.
    pub outcomes: Vec<Vec<Vec<Outcome>>>,
    /// Wins over all opponents and configs divided by
    /// `configs * (models - 1)`; zero when there is no opponent.
    pub win_rate: Vec<f64>,
}

impl WinMatrix {
    pub fn wins(&self, model: usize) -> usize {
        self.outcomes[model]
            .iter()
            .flatten()
            .filter(|&&o| o == Outcome::Win)
            .count()
    }

    pub fn wins_against(&self, model: usize, opponent: usize) -> usize {
        self.outcomes[model][opponent]
            .iter()
            .filter(|&&o| o == Outcome::Win)
            .count()
    }
}

/// Pairwise significance tournament on per-config reward distributions.
pub fn pairwise_winrate(table: &RewardTable, opts: &WinRateOptions) -> Result<WinMatrix> {
    let m = table.models.len();
    let c = table.configs.len();
    if table.samples.len() != m {
        return Err(Error::Shape {
            what: "models in reward table",
            expected: m,
            got: table.samples.len(),
        });
    }
    for (model, row) in table.samples.iter().enumerate() {
        if row.len() != c {
            return Err(Error::Shape {
                what: "configs in reward table",
                expected: c,
                got: row.len(),
            });
        }
        if let Some(cfg) = row.iter().position(|s| s.len() < 2) {
            return Err(Error::Invalid(format!(
                "{} on {} has fewer than 2 samples",
                table.models[model], table.configs[cfg]
            )));
        }
    }
    let mut outcomes = vec![vec![vec![Outcome::Inconclusive; c]; m]; m];
    #[allow(clippy::needless_range_loop)]
    for a in 0..m {
        for b in a + 1..m {
            let row: Vec<Outcome> = (0..c)
                .map(|k| compare(&table.samples[a][k], &table.samples[b][k], opts))
                .collect();
            outcomes[b][a] = row.iter().map(|o| o.flip()).collect();
            outcomes[a][b] = row;
        }
    }
    let denom = (c * m.saturating_sub(1)) as f64;
    let mut matrix = WinMatrix {
        models: table.models.clone(),
        configs: table.configs.clone(),
        outcomes,
        win_rate: vec![0.0; m],
    };
    if denom > 0.0 {
        matrix.win_rate = (0..m).map(|a| matrix.wins(a) as f64 / denom).collect();
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_constants_win() {
        let ones = vec![1.0; 30];
        let zeros = vec![0.0; 30];
        assert_eq!(compare(&ones, &zeros, &WinRateOptions::default()), Outcome::Win);
        assert_eq!(compare(&ones, &ones, &WinRateOptions::default()), Outcome::Inconclusive);
    }

    #[test]
    fn pooled_statistic_matches_hand_computation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        // means 2.5 and 5, variances 5/3 and 20/3, pooled 25/6
        let t = student_t_test(&a, &b, false).unwrap();
        let expected = -2.5 / ((25.0 / 6.0) * 0.5f64).sqrt();
        assert!((t.t - expected).abs() < 1e-12);
        assert_eq!(t.df, 6.0);
    }
}
