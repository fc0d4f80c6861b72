use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use explore_bench::{hard_mab, linear_cb, log_curve};
use explore_core::agent::{Agent, AgentPolicy, MockBackend, PolicyKind};
use explore_core::analysis::fit_regret;
use explore_core::classical::{LinUcbState, UcbState};
use explore_core::eval::{pairwise_winrate, run_trial, trial_manifest, RewardTable, WinRateOptions};
use explore_core::seed::rng_from_seed;
use explore_core::textual::{render_ag, render_rh, HistoryRecord, Scenario, SummaryStats, Textualization};
use rand::Rng;
use std::hint::black_box;
use std::sync::Arc;

fn classical(c: &mut Criterion) {
    let mut rng = rng_from_seed(3);
    let mut ucb = UcbState::new(20, 1.0);
    for _ in 0..1000 {
        let arm = rng.random_range(0..20);
        ucb.update(arm, rng.random::<f64>()).unwrap();
    }
    c.bench_function("ucb_select_k20", |b| b.iter(|| black_box(ucb.select())));

    let mut lin = LinUcbState::new(30, 5, 1.0, 1.0).unwrap();
    let features: Vec<Vec<f64>> = (0..30).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
    for _ in 0..500 {
        let arm = rng.random_range(0..30);
        lin.update(arm, &features[arm], rng.random::<f64>()).unwrap();
    }
    c.bench_function("linucb_select_k30_d5", |b| b.iter(|| black_box(lin.select(&features).unwrap())));
}

fn prompts(c: &mut Criterion) {
    let task = hard_mab();
    let scenario = Scenario::for_task(&task).unwrap();
    let mut rng = rng_from_seed(4);
    let mut ucb = UcbState::new(20, 1.0);
    let history: Vec<HistoryRecord> = (1..=1000)
        .map(|step| {
            let arm = rng.random_range(0..20);
            let reward = f64::from(u8::from(rng.random::<bool>()));
            ucb.update(arm, reward).unwrap();
            HistoryRecord {
                step,
                context: None,
                arm,
                action: scenario.action_names[arm].clone(),
                reward,
                values: None,
            }
        })
        .collect();
    let stats = SummaryStats::from_ucb(&ucb, true);
    c.bench_function("render_rh_t1000", |b| b.iter(|| black_box(render_rh(&scenario, &history, "").unwrap())));
    c.bench_function("render_ag_k20", |b| b.iter(|| black_box(render_ag(&scenario, &stats, "").unwrap())));
}

fn trials(c: &mut Criterion) {
    let task = hard_mab();
    let mut group = c.benchmark_group("trial_k20_t1000");
    group.sample_size(20);
    group.bench_function("ucb", |b| {
        b.iter_batched(
            || Agent::new(AgentPolicy::ucb(), &task, None).unwrap(),
            |mut agent| {
                let manifest = trial_manifest(&agent, &task, "bench", 0, 7, 1000);
                black_box(run_trial(&mut agent, &task, manifest).unwrap())
            },
            BatchSize::SmallInput,
        )
    });
    let scenario = Scenario::for_task(&task).unwrap();
    group.bench_function("mock_ag", |b| {
        b.iter_batched(
            || {
                let backend = Arc::new(MockBackend::new(scenario.clone(), Textualization::Ag));
                let policy = AgentPolicy::textual(PolicyKind::TextualMock, Textualization::Ag);
                Agent::new(policy, &task, Some(backend)).unwrap()
            },
            |mut agent| {
                let manifest = trial_manifest(&agent, &task, "bench", 0, 7, 1000);
                black_box(run_trial(&mut agent, &task, manifest).unwrap())
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();

    let cb = linear_cb();
    c.bench_function("trial_linucb_k30_t200", |b| {
        b.iter_batched(
            || Agent::new(AgentPolicy::linucb(), &cb, None).unwrap(),
            |mut agent| {
                let manifest = trial_manifest(&agent, &cb, "bench", 0, 7, 200);
                black_box(run_trial(&mut agent, &cb, manifest).unwrap())
            },
            BatchSize::SmallInput,
        )
    });
}

fn analysis(c: &mut Criterion) {
    let curve = log_curve(1000);
    let mut group = c.benchmark_group("analysis");
    group.sample_size(20);
    group.bench_function("fit_regret_t1000", |b| b.iter(|| black_box(fit_regret(&curve, 0.2).unwrap())));

    let mut rng = rng_from_seed(5);
    let table = RewardTable {
        models: (0..5).map(|m| format!("m{m}")).collect(),
        configs: (0..16).map(|c| format!("c{c}")).collect(),
        samples: (0..5)
            .map(|m| {
                (0..16)
                    .map(|_| (0..30).map(|_| rng.random::<f64>() + m as f64 * 0.05).collect())
                    .collect()
            })
            .collect(),
    };
    group.bench_function("pairwise_winrate_5x16x30", |b| {
        b.iter(|| black_box(pairwise_winrate(&table, &WinRateOptions::default()).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, classical, prompts, trials, analysis);
criterion_main!(benches);
