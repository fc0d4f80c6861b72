//! `explore report`: metrics, win-rates and regret fits from a run
//! directory. Output depends only on the logs, so regenerating a report
//! gives identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use explore_core::analysis::{classify, fit_regret, GrowthClass, RegretFitParams, DEFAULT_BETA_EPSILON};
use explore_core::env::TaskFamily;
use explore_core::eval::{
    canonical_checkpoints, exploration_metrics, mean_regret_curve, pairwise_winrate, ExplorationMetrics, Outcome,
    RewardTable, TrialLog, WinMatrix, WinRateOptions,
};

use crate::run::{log_path, RunIndex, TaskRecord};
use crate::{write_atomic, Failure};

pub const REPORT_DIR: &str = "report";
/// Shortest curve the regret model is fitted to.
pub const MIN_FIT_LENGTH: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

struct Cell {
    task: TaskRecord,
    agent: String,
    logs: Vec<TrialLog>,
}

fn family_name(f: TaskFamily) -> &'static str {
    match f {
        TaskFamily::Mab => "mab",
        TaskFamily::Contextual => "contextual",
    }
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Win => "win",
        Outcome::Loss => "loss",
        Outcome::Inconclusive => "inconclusive",
    }
}

/// Reads every expected log, listing all that are missing or incomplete.
fn load_cells(run_dir: &Path, index: &RunIndex) -> anyhow::Result<Vec<Cell>> {
    let mut cells = Vec::new();
    let mut problems = Vec::new();
    for p in &index.pairings {
        let task = index
            .task(&p.config)
            .with_context(|| format!("run index lists pairing for unknown task {:?}", p.config))?;
        let mut logs = Vec::with_capacity(p.trials);
        for trial in 0..p.trials {
            let path = log_path(run_dir, &p.config, &p.agent, trial);
            if !path.exists() {
                problems.push(format!("{} (missing)", path.display()));
                continue;
            }
            match TrialLog::read_jsonl(&path) {
                Ok(log) if log.manifest.config != task.identity => {
                    problems.push(format!("{} (belongs to {})", path.display(), log.manifest.config))
                }
                Ok(log) if !log.is_complete() => problems.push(format!(
                    "{} (incomplete: {} of {} steps)",
                    path.display(),
                    log.steps.len(),
                    log.manifest.horizon
                )),
                Ok(log) => logs.push(log),
                Err(e) => problems.push(format!("{} ({e})", path.display())),
            }
        }
        cells.push(Cell {
            task: task.clone(),
            agent: p.agent.clone(),
            logs,
        });
    }
    if !problems.is_empty() {
        return Err(Failure::partial(format!(
            "{} trial log(s) missing or incomplete:\n  {}",
            problems.len(),
            problems.join("\n  ")
        ))
        .into());
    }
    cells.sort_by(|a, b| (&a.task.label, &a.agent).cmp(&(&b.task.label, &b.agent)));
    for c in &mut cells {
        c.logs.sort_by_key(|l| l.manifest.trial);
    }
    Ok(cells)
}

struct Csv {
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(header: &[&str]) -> anyhow::Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    fn row<I, S>(&mut self, fields: I) -> anyhow::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(self) -> anyhow::Result<Vec<u8>> {
        self.writer.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

struct Tournament {
    family: TaskFamily,
    matrix: WinMatrix,
}

fn tournaments(cells: &[Cell], agents: &[String], opts: &WinRateOptions) -> anyhow::Result<Vec<Tournament>> {
    let mut out = Vec::new();
    for family in [TaskFamily::Mab, TaskFamily::Contextual] {
        let mut configs: Vec<&str> = cells
            .iter()
            .filter(|c| c.task.family == family)
            .map(|c| c.task.label.as_str())
            .collect();
        configs.dedup();
        if configs.is_empty() {
            continue;
        }
        // agents in config order that ran on every task of the family
        let models: Vec<&String> = agents
            .iter()
            .filter(|a| {
                configs
                    .iter()
                    .all(|cfg| cells.iter().any(|c| c.task.label == *cfg && &c.agent == *a))
            })
            .collect();
        if models.is_empty() {
            continue;
        }
        let samples = models
            .iter()
            .map(|m| {
                configs
                    .iter()
                    .map(|cfg| {
                        let cell = cells
                            .iter()
                            .find(|c| c.task.label == *cfg && &c.agent == *m)
                            .expect("checked above");
                        cell.logs.iter().map(TrialLog::total_reward).collect()
                    })
                    .collect()
            })
            .collect();
        let table = RewardTable {
            models: models.iter().map(|m| m.to_string()).collect(),
            configs: configs.iter().map(|c| c.to_string()).collect(),
            samples,
        };
        out.push(Tournament {
            family,
            matrix: pairwise_winrate(&table, opts)?,
        });
    }
    Ok(out)
}

struct Fit {
    params: RegretFitParams,
    class: GrowthClass,
}

/// Writes the report for `run_dir` into `run_dir/report`.
pub fn write_report(run_dir: &Path) -> anyhow::Result<ReportSummary> {
    let index = RunIndex::read(run_dir)?;
    let cells = load_cells(run_dir, &index)?;
    let run = index.fingerprint.as_str();
    let dir = run_dir.join(REPORT_DIR);
    let mut files = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> anyhow::Result<()> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        files.push(path);
        Ok(())
    };

    // per-trial rewards
    let mut rewards = Csv::new(&[
        "run",
        "config",
        "agent",
        "trial",
        "seed",
        "total_reward",
        "total_expected_reward",
        "fallback_rate",
        "tainted",
    ])?;
    let mut tainted: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &cells {
        for log in &c.logs {
            let is_tainted = log.is_tainted(index.taint_threshold);
            if is_tainted {
                *tainted.entry(c.agent.as_str()).or_default() += 1;
            }
            rewards.row([
                run.to_string(),
                c.task.label.clone(),
                c.agent.clone(),
                log.manifest.trial.to_string(),
                log.manifest.seed.to_string(),
                log.total_reward().to_string(),
                log.total_expected_reward().to_string(),
                log.fallback_rate().to_string(),
                is_tainted.to_string(),
            ])?;
        }
    }
    emit("rewards.csv", rewards.finish()?)?;

    // exploration diagnostics at the canonical checkpoints
    let mut exploration = Csv::new(&[
        "run",
        "config",
        "agent",
        "checkpoint",
        "min_frac",
        "min_frac_normalized",
        "opt_frac",
    ])?;
    let mut metrics: Vec<ExplorationMetrics> = Vec::with_capacity(cells.len());
    for c in &cells {
        let m = exploration_metrics(&c.logs, &canonical_checkpoints(c.task.horizon))?;
        for i in 0..m.checkpoints.len() {
            exploration.row([
                run.to_string(),
                c.task.label.clone(),
                c.agent.clone(),
                m.checkpoints[i].to_string(),
                m.min_frac[i].to_string(),
                m.min_frac_normalized[i].to_string(),
                m.opt_frac[i].to_string(),
            ])?;
        }
        metrics.push(m);
    }
    emit("exploration.csv", exploration.finish()?)?;

    // mean regret curves and their fits
    let mut regret = Csv::new(&["run", "config", "agent", "step", "mean_regret", "delta_min"])?;
    let mut fits_csv = Csv::new(&[
        "run", "config", "agent", "delta_min", "lambda", "alpha", "beta", "lambda2", "mse", "growth",
    ])?;
    let mut fits: Vec<Option<Fit>> = Vec::with_capacity(cells.len());
    for c in &cells {
        let curve = mean_regret_curve(&c.logs)?;
        let delta = opt(c.task.delta_min);
        for (t, r) in curve.iter().enumerate() {
            regret.row([
                run.to_string(),
                c.task.label.clone(),
                c.agent.clone(),
                (t + 1).to_string(),
                r.to_string(),
                delta.clone(),
            ])?;
        }
        let fit = match c.task.delta_min {
            Some(d) if curve.len() >= MIN_FIT_LENGTH => {
                let params = fit_regret(&curve, d)?;
                Some(Fit {
                    class: classify(&params, DEFAULT_BETA_EPSILON),
                    params,
                })
            }
            _ => None,
        };
        if let Some(f) = &fit {
            let p = &f.params;
            fits_csv.row([
                run.to_string(),
                c.task.label.clone(),
                c.agent.clone(),
                p.delta_min.to_string(),
                p.lambda.to_string(),
                p.alpha.to_string(),
                p.beta.to_string(),
                p.lambda2.to_string(),
                p.mse.to_string(),
                f.class.to_string(),
            ])?;
        }
        fits.push(fit);
    }
    emit("regret.csv", regret.finish()?)?;
    emit("fits.csv", fits_csv.finish()?)?;

    // win-rate tournaments, one per task family
    let opts = WinRateOptions {
        welch: index.welch,
        ..WinRateOptions::default()
    };
    let games = tournaments(&cells, &index.agents, &opts)?;
    let mut pairwise = Csv::new(&["run", "family", "agent", "opponent", "config", "outcome"])?;
    let mut overall = Csv::new(&["run", "family", "agent", "wins", "comparisons", "win_rate"])?;
    for g in &games {
        let m = &g.matrix;
        for a in 0..m.models.len() {
            for b in 0..m.models.len() {
                if a == b {
                    continue;
                }
                for (ci, cfg) in m.configs.iter().enumerate() {
                    pairwise.row([
                        run,
                        family_name(g.family),
                        &m.models[a],
                        &m.models[b],
                        cfg,
                        outcome_name(m.outcomes[a][b][ci]),
                    ])?;
                }
            }
            overall.row([
                run.to_string(),
                family_name(g.family).to_string(),
                m.models[a].clone(),
                m.wins(a).to_string(),
                (m.configs.len() * (m.models.len() - 1)).to_string(),
                m.win_rate[a].to_string(),
            ])?;
        }
    }
    emit("winrate.csv", pairwise.finish()?)?;
    emit("winrate_overall.csv", overall.finish()?)?;

    let summary = summary_markdown(&index, &cells, &metrics, &fits, &games, &tainted);
    emit("summary.md", summary.into_bytes())?;
    Ok(ReportSummary { dir, files })
}

fn summary_markdown(
    index: &RunIndex,
    cells: &[Cell],
    metrics: &[ExplorationMetrics],
    fits: &[Option<Fit>],
    games: &[Tournament],
    tainted: &BTreeMap<&str, usize>,
) -> String {
    let mut s = String::new();
    let trials: usize = cells.iter().map(|c| c.logs.len()).sum();
    let _ = writeln!(s, "# Run {}\n", index.fingerprint);
    let _ = writeln!(
        s,
        "{} tasks, {} agents, {} trial logs.\n",
        index.tasks.len(),
        index.agents.len(),
        trials
    );

    let _ = writeln!(s, "## Win rates\n");
    if games.is_empty() {
        let _ = writeln!(s, "No tournament: no agent covers a whole task family.\n");
    }
    for g in games {
        let m = &g.matrix;
        let _ = writeln!(s, "### {} tasks ({} configs)\n", family_name(g.family), m.configs.len());
        if m.models.len() < 2 {
            let _ = writeln!(s, "Only one agent ({}); no pairwise comparisons.\n", m.models[0]);
            continue;
        }
        let _ = writeln!(s, "| agent | wins | comparisons | win rate |");
        let _ = writeln!(s, "|---|---:|---:|---:|");
        for a in 0..m.models.len() {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.3} |",
                m.models[a],
                m.wins(a),
                m.configs.len() * (m.models.len() - 1),
                m.win_rate[a]
            );
        }
        let _ = writeln!(s);
    }

    let _ = writeln!(s, "## Exploration and regret\n");
    let _ = writeln!(
        s,
        "| config | agent | mean reward | OptFrac (final) | MinFrac (final) | beta | growth |"
    );
    let _ = writeln!(s, "|---|---|---:|---:|---:|---:|---|");
    for ((c, m), f) in cells.iter().zip(metrics).zip(fits) {
        let mean_reward = c.logs.iter().map(TrialLog::total_reward).sum::<f64>() / c.logs.len().max(1) as f64;
        let (beta, growth) = match f {
            Some(f) => (format!("{:.4}", f.params.beta), f.class.to_string()),
            None => ("-".into(), "not fitted".into()),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {:.2} | {:.3} | {:.3} | {} | {} |",
            c.task.label,
            c.agent,
            mean_reward,
            m.opt_frac.last().copied().unwrap_or(0.0),
            m.min_frac.last().copied().unwrap_or(0.0),
            beta,
            growth
        );
    }
    let unfitted: Vec<&str> = cells
        .iter()
        .zip(fits)
        .filter(|(_, f)| f.is_none())
        .map(|(c, _)| c.task.label.as_str())
        .collect();
    if !unfitted.is_empty() {
        let _ = writeln!(
            s,
            "\nRegret is not fitted where a task has no `delta_min` or fewer than {MIN_FIT_LENGTH} steps."
        );
    }
    if !tainted.is_empty() {
        let _ = writeln!(
            s,
            "\n## Tainted trials\n\nTrials whose fallback rate exceeds {}:\n",
            index.taint_threshold
        );
        for (agent, n) in tainted {
            let _ = writeln!(s, "- {agent}: {n}");
        }
    }
    s
}
