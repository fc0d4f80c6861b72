use std::path::{Path, PathBuf};

use explore_cli::config::{
    parse_config, AgentEntry, AppliesTo, BackendKind, DatasetEntry, DistillEntry, DistillPreset, FewshotEntry,
    FewshotSource, MovieLensSource, SizesEntry, SplitName, SyntheticCorpus, TaskEntry, TaskKind, TaskPreset,
};
use explore_cli::RunConfig;
use explore_core::agent::{HttpConfig, PolicyKind};
use explore_core::env::{ActionDomain, Difficulty, RewardKind};
use explore_core::textual::Textualization;
use proptest::prelude::*;

const EXAMPLE: &str = r#"
seed = 11
trials = 5
out = "runs/x"
workers = 3
welch = true

[movielens]
synthetic = { users = 100, movies = 30 }
user_split = 0.25

[[task]]
preset = "mab-full-16"
horizon = 40

[[task]]
kind = "movielens"
arms = 10
dim = 4
split = "train"
delta_min = 0.3

[[agent]]
name = "ucb"
policy = "classical_ucb"
alpha = 0.5

[[agent]]
name = "llm"
policy = "remote_llm"
textualization = "SH"
backend = "http"
temperature = 0.0
applies_to = "mab"

[agent.http]
base_url = "http://127.0.0.1:9"
model = "m"
api_key_env = "KEY"

[agent.fewshot]
from = "hardest"
demos = 3
excerpt = [4, 6]

[distill]
preset = "paper-6"
[distill.sizes]
mab_trajectories = 2

[[distill.dataset]]
name = "one"
task = { kind = "mab", reward = "bernoulli", difficulty = "easy", arms = 5 }
textualization = "RH"
trajectories = 1
"#;

fn parse(text: &str) -> RunConfig {
    parse_config(text, Path::new("t.toml"), Path::new(".")).unwrap().config
}

#[test]
fn example_round_trips_through_canonical_text() {
    let cfg = parse(EXAMPLE);
    assert_eq!(cfg.tasks.len(), 2);
    assert_eq!(cfg.agents[1].http.as_ref().unwrap().api_key_env.as_deref(), Some("KEY"));
    let canonical = cfg.canonical().unwrap();
    assert_eq!(parse(&canonical), cfg);
    // canonical form is a fixed point
    assert_eq!(parse(&canonical).canonical().unwrap(), canonical);
}

#[test]
fn key_order_and_whitespace_do_not_change_the_canonical_form() {
    let a = parse("seed = 1\ntrials = 2\n[[agent]]\nname = \"u\"\npolicy = \"classical_ucb\"\n");
    let b = parse("trials=2\nseed=1\n\n[[agent]]\npolicy=\"classical_ucb\"\n  name=\"u\"\n");
    assert_eq!(a.canonical().unwrap(), b.canonical().unwrap());
}

fn opt<T: std::fmt::Debug + Clone + 'static>(s: impl Strategy<Value = T> + 'static) -> BoxedStrategy<Option<T>> {
    prop::option::of(s).boxed()
}

fn task_entry() -> impl Strategy<Value = TaskEntry> {
    prop_oneof![
        (prop::sample::select(vec![TaskPreset::MabFull16, TaskPreset::Cb2]), opt(1usize..500)).prop_map(
            |(p, horizon)| TaskEntry {
                preset: Some(p),
                horizon,
                ..TaskEntry::default()
            }
        ),
        (
            prop::sample::select(vec![RewardKind::Bernoulli, RewardKind::Gaussian]),
            prop::sample::select(vec![Difficulty::Easy, Difficulty::Hard]),
            2usize..30,
            opt(prop::sample::select(vec![ActionDomain::Videos, ActionDomain::Clothes])),
            opt(0.01f64..1.0),
        )
            .prop_map(|(reward, difficulty, arms, domain, delta_min)| TaskEntry {
                kind: Some(TaskKind::Mab),
                reward: Some(reward),
                difficulty: Some(difficulty),
                arms: Some(arms),
                domain,
                delta_min,
                ..TaskEntry::default()
            }),
        (2usize..40, opt(1usize..8), opt(prop::sample::select(vec![SplitName::Train, SplitName::Eval]))).prop_map(
            |(arms, dim, split)| TaskEntry {
                kind: Some(TaskKind::Movielens),
                arms: Some(arms),
                dim,
                split,
                ..TaskEntry::default()
            }
        ),
        (2usize..40, 1usize..8, opt(0.0f64..2.0), opt("[a-z]{1,8}")).prop_map(|(arms, dim, noise, name)| TaskEntry {
            kind: Some(TaskKind::Linear),
            arms: Some(arms),
            dim: Some(dim),
            noise,
            name,
            ..TaskEntry::default()
        }),
    ]
}

fn agent_entry() -> impl Strategy<Value = AgentEntry> {
    (
        "[a-z][a-z0-9_-]{0,10}",
        prop::sample::select(vec![
            PolicyKind::ClassicalUcb,
            PolicyKind::ClassicalLinUcb,
            PolicyKind::EpsilonGreedy,
            PolicyKind::TextualMock,
            PolicyKind::RemoteLlm,
        ]),
        opt(0.0f64..3.0),
        opt(prop::sample::select(vec![Textualization::Rh, Textualization::Sh, Textualization::Ag])),
        opt(prop::sample::select(vec![AppliesTo::Mab, AppliesTo::Cb, AppliesTo::All])),
        opt(0usize..6),
        any::<bool>(),
    )
        .prop_map(|(name, policy, alpha, textualization, applies_to, decimals, with_fewshot)| {
            let mut a = AgentEntry::new(name, policy);
            a.alpha = alpha;
            a.applies_to = applies_to;
            match policy {
                PolicyKind::EpsilonGreedy => a.epsilon = alpha.map(|x| x / 3.0),
                PolicyKind::TextualMock => {
                    a.textualization = textualization;
                    a.value_decimals = decimals;
                }
                PolicyKind::RemoteLlm => {
                    a.textualization = textualization;
                    a.backend = Some(BackendKind::Http);
                    a.http = Some(HttpConfig {
                        model: "m".into(),
                        api_key_env: decimals.map(|d| format!("KEY{d}")),
                        ..HttpConfig::default()
                    });
                    if with_fewshot {
                        a.fewshot = Some(FewshotEntry {
                            from: Some(FewshotSource::Easiest),
                            file: None,
                            demos: decimals.map(|d| d + 1),
                            excerpt: Some([3, 7]),
                        });
                    }
                }
                _ => {}
            }
            a
        })
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    (
        0u64..(i64::MAX as u64),
        1usize..100,
        opt(1usize..16),
        any::<bool>(),
        opt((2usize..500, 2usize..100, 0.05f64..0.95)),
        prop::collection::vec(task_entry(), 0..4),
        prop::collection::vec(agent_entry(), 0..4),
        opt((opt(1usize..5), prop::collection::vec(1usize..4, 0..3))),
    )
        .prop_map(|(seed, trials, workers, welch, ml, tasks, agents, distill)| RunConfig {
            seed,
            trials,
            out: workers.map(|w| PathBuf::from(format!("runs/r{w}"))),
            workers,
            taint_threshold: 0.05,
            welch,
            movielens: ml.map(|(users, movies, split)| MovieLensSource {
                dir: None,
                synthetic: Some(SyntheticCorpus { users, movies }),
                user_split: split,
            }),
            tasks,
            agents,
            distill: distill.map(|(traj, sets)| DistillEntry {
                preset: Some(DistillPreset::Six),
                cb_arms: None,
                cb_dim: None,
                sizes: Some(SizesEntry {
                    mab_trajectories: traj,
                    ..SizesEntry::default()
                }),
                datasets: sets
                    .into_iter()
                    .enumerate()
                    .map(|(i, n)| DatasetEntry {
                        name: format!("d{i}"),
                        task: TaskEntry {
                            kind: Some(TaskKind::Mab),
                            reward: Some(RewardKind::Bernoulli),
                            difficulty: Some(Difficulty::Hard),
                            arms: Some(n + 1),
                            ..TaskEntry::default()
                        },
                        textualization: Textualization::Ag,
                        trajectories: n,
                        horizon: None,
                        alpha: None,
                    })
                    .collect(),
            }),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_text_parses_back_to_the_same_config(cfg in run_config()) {
        let text = cfg.canonical().unwrap();
        let back = parse_config(&text, Path::new("t.toml"), Path::new("."))
            .map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?
            .config;
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.canonical().unwrap(), text);
    }
}
