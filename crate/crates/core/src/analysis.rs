//! Parametric regret model `f(T) = λ ln(T)^α / Δ + βT + λ₂` and the
//! sublinear / linear classification derived from it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_BETA_EPSILON: f64 = 1e-3;
/// Share of total growth below which the logarithmic term is negligible.
pub const LOG_SHARE_THRESHOLD: f64 = 0.01;

const ALPHA_STARTS: [f64; 4] = [0.5, 1.0, 2.0, 3.0];
const STEP_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretFitParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda2: f64,
    pub delta_min: f64,
    pub mse: f64,
    /// Horizon of the fitted curve.
    pub horizon: usize,
    /// Lowest MSE among the starting points, before refinement.
    pub start_mse: f64,
}

impl RegretFitParams {
    pub fn predict(&self, t: f64) -> f64 {
        model(&[self.lambda, self.alpha, self.beta, self.lambda2], self.delta_min, t)
    }

    /// Growth of the logarithmic and linear terms between T = 2 and the
    /// horizon. T = 1 is skipped: `log(1)^α` jumps from 1 to 0 as α leaves
    /// zero, which is an offset rather than growth.
    pub fn growth(&self) -> (f64, f64) {
        let t_max = self.horizon.max(2) as f64;
        let log_growth = self.lambda * (t_max.ln().powf(self.alpha) - 2f64.ln().powf(self.alpha)) / self.delta_min;
        (log_growth, self.beta * (t_max - 2.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GrowthClass {
    Sublinear,
    Linear,
    Mixed,
}

impl std::fmt::Display for GrowthClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GrowthClass::Sublinear => "sublinear",
            GrowthClass::Linear => "linear",
            GrowthClass::Mixed => "mixed",
        })
    }
}

/// `β ≤ ε` is sublinear; otherwise linear when the logarithmic term adds
/// under 1% of the growth, mixed when it does not.
pub fn classify(params: &RegretFitParams, beta_epsilon: f64) -> GrowthClass {
    if params.beta <= beta_epsilon {
        return GrowthClass::Sublinear;
    }
    let (log_growth, lin_growth) = params.growth();
    let total = log_growth.abs() + lin_growth;
    if total <= 0.0 || log_growth.abs() < LOG_SHARE_THRESHOLD * total {
        GrowthClass::Linear
    } else {
        GrowthClass::Mixed
    }
}

fn model(p: &[f64; 4], delta: f64, t: f64) -> f64 {
    p[0] * t.ln().powf(p[1]) / delta + p[2] * t + p[3]
}

struct Problem<'a> {
    y: &'a [f64],
    delta: f64,
    logs: Vec<f64>,
}

impl Problem<'_> {
    fn residuals(&self, p: &[f64; 4]) -> Vec<f64> {
        self.y
            .iter()
            .enumerate()
            .map(|(i, &y)| p[0] * self.logs[i].powf(p[1]) / self.delta + p[2] * (i + 1) as f64 + p[3] - y)
            .collect()
    }

    fn cost(&self, p: &[f64; 4]) -> f64 {
        self.residuals(p).iter().map(|r| r * r).sum()
    }

    fn jacobian(&self, p: &[f64; 4]) -> DMatrix<f64> {
        let n = self.y.len();
        DMatrix::from_fn(n, 4, |i, j| {
            let l = self.logs[i];
            let la = l.powf(p[1]);
            match j {
                0 => la / self.delta,
                1 if l > 0.0 => p[0] * la * l.ln() / self.delta,
                1 => 0.0,
                2 => (i + 1) as f64,
                _ => 1.0,
            }
        })
    }

    /// Least squares for λ and λ₂ (and β when not given) with α fixed;
    /// negative λ or β are dropped from the design until none remain.
    fn linear_start(&self, alpha: f64, beta: Option<f64>) -> [f64; 4] {
        let n = self.y.len();
        let mut free: Vec<usize> = if beta.is_some() { vec![0, 3] } else { vec![0, 2, 3] };
        let target: Vec<f64> = self
            .y
            .iter()
            .enumerate()
            .map(|(i, &y)| y - beta.unwrap_or(0.0) * (i + 1) as f64)
            .collect();
        loop {
            let x = DMatrix::from_fn(n, free.len(), |i, j| match free[j] {
                0 => self.logs[i].powf(alpha) / self.delta,
                2 => (i + 1) as f64,
                _ => 1.0,
            });
            let sol = x
                .clone()
                .svd(true, true)
                .solve(&DVector::from_column_slice(&target), 1e-12)
                .unwrap_or_else(|_| DVector::zeros(free.len()));
            let neg = free
                .iter()
                .zip(sol.iter())
                .position(|(&c, &v)| c != 3 && v < 0.0);
            match neg {
                Some(k) => {
                    free.remove(k);
                }
                None => {
                    let mut p = [0.0, alpha, beta.unwrap_or(0.0), 0.0];
                    for (&c, &v) in free.iter().zip(sol.iter()) {
                        p[c] = v;
                    }
                    return p;
                }
            }
        }
    }

    /// Projected Levenberg-Marquardt on the box λ, α, β ≥ 0.
    fn refine(&self, start: [f64; 4]) -> [f64; 4] {
        let mut p = start;
        let mut cost = self.cost(&p);
        let mut mu = 1e-3;
        for _ in 0..MAX_ITERATIONS {
            let r = DVector::from_vec(self.residuals(&p));
            let j = self.jacobian(&p);
            let g = j.transpose() * &r;
            let h = j.transpose() * &j;
            // bound-active parameters whose gradient points outward stay put
            let free: Vec<usize> = (0..4).filter(|&k| k == 3 || p[k] > 0.0 || g[k] < 0.0).collect();
            let mut improved = false;
            while mu < 1e12 {
                let nf = free.len();
                let mut a = DMatrix::from_fn(nf, nf, |x, y| h[(free[x], free[y])]);
                for d in 0..nf {
                    a[(d, d)] += mu * (h[(free[d], free[d])] + 1e-12);
                }
                let rhs = DVector::from_fn(nf, |x, _| -g[free[x]]);
                let Some(step) = a.cholesky().map(|c| c.solve(&rhs)) else {
                    mu *= 4.0;
                    continue;
                };
                let mut q = p;
                for (x, &k) in free.iter().enumerate() {
                    q[k] = p[k] + step[x];
                    if k != 3 {
                        q[k] = q[k].max(0.0);
                    }
                }
                let qc = self.cost(&q);
                if qc.is_finite() && qc < cost {
                    let moved: f64 = (0..4).map(|k| (q[k] - p[k]).powi(2)).sum::<f64>().sqrt();
                    let scale: f64 = 1.0 + (0..4).map(|k| p[k] * p[k]).sum::<f64>().sqrt();
                    p = q;
                    cost = qc;
                    mu = (mu / 3.0).max(1e-15);
                    improved = true;
                    if moved < STEP_TOLERANCE * scale {
                        return p;
                    }
                    break;
                }
                mu *= 2.0;
            }
            if !improved {
                break;
            }
        }
        p
    }
}

/// Fits the regret model to a cumulative regret curve sampled at
/// T = 1, 2, …, n. Eight starts (four exponents, each with β initialised at
/// zero and at the late slope) are refined and the lowest-MSE fit returned.
pub fn fit_regret(curve: &[f64], delta_min: f64) -> Result<RegretFitParams> {
    let n = curve.len();
    if n < 10 {
        return Err(Error::Fit(format!("curve has {n} points, need at least 10")));
    }
    if !(delta_min > 0.0 && delta_min.is_finite()) {
        return Err(Error::Fit(format!("delta_min must be positive, got {delta_min}")));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("curve has non-finite values".into()));
    }
    let problem = Problem {
        y: curve,
        delta: delta_min,
        logs: (1..=n).map(|t| (t as f64).ln()).collect(),
    };
    let q = n - n / 4 - 1;
    let late_slope = ((curve[n - 1] - curve[q]) / (n - 1 - q) as f64).max(0.0);
    let mut best: Option<([f64; 4], f64)> = None;
    let mut start_best = f64::INFINITY;
    for &alpha in &ALPHA_STARTS {
        for beta in [Some(0.0), Some(late_slope)] {
            let start = problem.linear_start(alpha, beta);
            let sc = problem.cost(&start);
            if sc.is_finite() {
                start_best = start_best.min(sc);
            }
            let p = problem.refine(start);
            let c = problem.cost(&p);
            if c.is_finite() && best.is_none_or(|(_, b)| c < b) {
                best = Some((p, c));
            }
        }
    }
    let (p, cost) = best.ok_or_else(|| Error::Fit("no starting point produced a finite residual".into()))?;
    Ok(RegretFitParams {
        lambda: p[0],
        alpha: p[1],
        beta: p[2],
        lambda2: p[3],
        delta_min,
        mse: cost / n as f64,
        horizon: n,
        start_mse: start_best / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(p: [f64; 4], delta: f64, n: usize) -> Vec<f64> {
        (1..=n).map(|t| model(&p, delta, t as f64)).collect()
    }

    #[test]
    fn constant_curve() {
        let fit = fit_regret(&vec![3.0; 50], 0.5).unwrap();
        assert!(fit.beta.abs() < 1e-9);
        assert!(fit.lambda.abs() < 1e-9);
        assert!((fit.lambda2 - 3.0).abs() < 1e-6);
    }

    #[test]
    fn linear_curve() {
        let y: Vec<f64> = (1..=200).map(|t| 0.3 * t as f64).collect();
        let fit = fit_regret(&y, 0.5).unwrap();
        assert!((fit.beta - 0.3).abs() < 0.01);
        assert_eq!(classify(&fit, DEFAULT_BETA_EPSILON), GrowthClass::Linear);
    }

    #[test]
    fn self_generated_curve_refits_exactly() {
        let y = curve([2.0, 1.0, 0.0, 0.0], 0.5, 300);
        let fit = fit_regret(&y, 0.5).unwrap();
        assert!(fit.mse < 1e-8, "mse {}", fit.mse);
        assert!(fit.mse <= fit.start_mse);
    }

    #[test]
    fn threshold_is_inclusive() {
        let p = RegretFitParams {
            lambda: 1.0,
            alpha: 1.0,
            beta: 1e-3,
            lambda2: 0.0,
            delta_min: 0.5,
            mse: 0.0,
            horizon: 100,
            start_mse: 0.0,
        };
        assert_eq!(classify(&p, 1e-3), GrowthClass::Sublinear);
    }
}
