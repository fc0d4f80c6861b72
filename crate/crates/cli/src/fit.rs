//! `explore fit`: fit the regret model to curves in a CSV file.
//!
//! Two input shapes are accepted: the long `regret.csv` written by
//! `explore report` (columns `config`, `agent`, `step`, `mean_regret` and
//! optionally `delta_min`), or a single curve with one value per row.

use std::collections::BTreeMap;
use std::path::Path;

use explore_core::analysis::{classify, fit_regret, GrowthClass, RegretFitParams, DEFAULT_BETA_EPSILON};

use crate::Failure;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveFit {
    pub config: String,
    pub agent: String,
    pub params: RegretFitParams,
    pub class: GrowthClass,
}

struct Curve {
    delta_min: Option<f64>,
    points: Vec<(usize, f64)>,
}

fn invalid(path: &Path, line: usize, message: impl std::fmt::Display) -> anyhow::Error {
    Failure::validation(format!("{}:{line}: {message}", path.display())).into()
}

fn number<T: std::str::FromStr>(path: &Path, line: usize, column: &str, text: &str) -> anyhow::Result<T> {
    text.trim()
        .parse()
        .map_err(|_| invalid(path, line, format!("`{column}` value {text:?} is not a number")))
}

fn read_curves(path: &Path) -> anyhow::Result<BTreeMap<(String, String), Curve>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let rows: Vec<csv::StringRecord> = reader
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let Some(first) = rows.first() else {
        return Err(invalid(path, 1, "empty file"));
    };
    let header: Vec<&str> = first.iter().map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let mut curves: BTreeMap<(String, String), Curve> = BTreeMap::new();

    if let (Some(c), Some(a), Some(s), Some(r)) = (col("config"), col("agent"), col("step"), col("mean_regret")) {
        let d = col("delta_min");
        for (i, row) in rows.iter().enumerate().skip(1) {
            let line = i + 1;
            let field = |j: usize| row.get(j).ok_or_else(|| invalid(path, line, "short row"));
            let key = (field(c)?.to_string(), field(a)?.to_string());
            let step: usize = number(path, line, "step", field(s)?)?;
            let value: f64 = number(path, line, "mean_regret", field(r)?)?;
            let delta = match d.and_then(|j| row.get(j)).map(str::trim) {
                Some(t) if !t.is_empty() => Some(number::<f64>(path, line, "delta_min", t)?),
                _ => None,
            };
            let curve = curves.entry(key).or_insert(Curve {
                delta_min: delta,
                points: Vec::new(),
            });
            curve.points.push((step, value));
        }
    } else {
        let skip = usize::from(first.get(0).is_some_and(|v| v.trim().parse::<f64>().is_err()));
        let mut points = Vec::new();
        for (i, row) in rows.iter().enumerate().skip(skip) {
            let line = i + 1;
            let text = row.get(row.len().saturating_sub(1)).unwrap_or("");
            points.push((points.len() + 1, number(path, line, "regret", text)?));
        }
        curves.insert((String::new(), String::new()), Curve { delta_min: None, points });
    }
    Ok(curves)
}

/// Result of fitting a file: fitted curves plus those skipped for lack of a
/// gap.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub fits: Vec<CurveFit>,
    pub skipped: Vec<(String, String)>,
}

/// Fits every curve in `path`. `delta_min` overrides the file's column;
/// curves with neither are skipped, and it is an error if that leaves
/// nothing to fit.
pub fn fit_file(path: &Path, delta_min: Option<f64>) -> anyhow::Result<FitOutcome> {
    if delta_min.is_some_and(|d| !(d > 0.0 && d.is_finite())) {
        return Err(Failure::validation("--delta-min must be positive").into());
    }
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for ((config, agent), mut curve) in read_curves(path)? {
        curve.points.sort_by_key(|p| p.0);
        let Some(delta) = delta_min.or(curve.delta_min) else {
            skipped.push((config, agent));
            continue;
        };
        let values: Vec<f64> = curve.points.iter().map(|p| p.1).collect();
        let params = fit_regret(&values, delta).map_err(|e| Failure::validation(format!("{config}/{agent}: {e}")))?;
        fits.push(CurveFit {
            class: classify(&params, DEFAULT_BETA_EPSILON),
            config,
            agent,
            params,
        });
    }
    if fits.is_empty() {
        return Err(Failure::validation(format!(
            "{}: no curve has a delta_min; pass --delta-min",
            path.display()
        ))
        .into());
    }
    Ok(FitOutcome { fits, skipped })
}

/// Fit table as CSV text.
pub fn fits_csv(fits: &[CurveFit]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config", "agent", "delta_min", "lambda", "alpha", "beta", "lambda2", "mse", "growth"])?;
    for f in fits {
        let p = &f.params;
        w.write_record([
            f.config.clone(),
            f.agent.clone(),
            p.delta_min.to_string(),
            p.lambda.to_string(),
            p.alpha.to_string(),
            p.beta.to_string(),
            p.lambda2.to_string(),
            p.mse.to_string(),
            f.class.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes)?)
}
