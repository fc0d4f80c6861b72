use std::io::Write;
use std::sync::Arc;

use explore_core::agent::{Agent, AgentPolicy, CassetteBackend, MockBackend, PolicyKind, ScriptedBackend};
use explore_core::distill::{
    build_fewshot_block, generate_trajectories, read_trajectories, replay_check, write_dataset, DatasetSpec,
    OracleSettings,
};
use explore_core::env::synthetic::write_corpus;
use explore_core::env::{
    build_cb_instance, make_mab_instance, ActionDomain, CbConfig, Difficulty, MabConfig, MabInstance,
    MovieLensTask, RewardKind, Split, Task,
};
use explore_core::eval::{
    canonical_checkpoints, cumulative_regret, exploration_metrics, mean_regret_curve, run_trial, run_trial_logged,
    trial_manifest, TrialLog,
};
use explore_core::seed::{derive_seed, rng_from_seed};
use explore_core::textual::{Scenario, Textualization};

fn easy5() -> Task {
    let cfg = MabConfig::new(RewardKind::Bernoulli, Difficulty::Easy, 5, ActionDomain::Videos, 11);
    Task::Mab(Arc::new(make_mab_instance(cfg).unwrap()))
}

fn trials(policy: &AgentPolicy, task: &Task, n: u64, horizon: usize) -> Vec<TrialLog> {
    (0..n)
        .map(|i| {
            let mut agent = Agent::new(policy.clone(), task, None).unwrap();
            let m = trial_manifest(&agent, task, "t", i, derive_seed(3, "trial", i), horizon);
            run_trial(&mut agent, task, m).unwrap()
        })
        .collect()
}

#[test]
fn uniform_random_regret_per_step() {
    // best arm 0.75, others 0.25: uniform play loses 0.4 per step on average
    let logs = trials(&AgentPolicy::epsilon_greedy(1.0), &easy5(), 30, 200);
    let curve = mean_regret_curve(&logs).unwrap();
    let per_step = curve[199] / 200.0;
    assert!((per_step - 0.4).abs() <= 0.02, "per-step regret {per_step}");
}

#[test]
fn degenerate_instance_has_no_regret() {
    let Task::Mab(base) = easy5() else { unreachable!() };
    let flat = MabInstance {
        means: vec![0.5; 5],
        best_arm: 0,
        ..(*base).clone()
    };
    let logs = trials(&AgentPolicy::ucb(), &Task::Mab(Arc::new(flat)), 3, 100);
    assert!(logs.iter().all(|l| cumulative_regret(l).iter().all(|&r| r == 0.0)));
}

#[test]
fn ucb_beats_half_greedy_on_opt_frac() {
    let task = easy5();
    let cp = canonical_checkpoints(200);
    let ucb = exploration_metrics(&trials(&AgentPolicy::ucb(), &task, 30, 200), &cp).unwrap();
    let eg = exploration_metrics(&trials(&AgentPolicy::epsilon_greedy(0.5), &task, 30, 200), &cp).unwrap();
    assert!(ucb.opt_frac[4] > eg.opt_frac[4], "{:?} vs {:?}", ucb.opt_frac, eg.opt_frac);
}

#[test]
fn trials_are_bitwise_reproducible() {
    let task = easy5();
    let a = trials(&AgentPolicy::epsilon_greedy(0.3), &task, 3, 150);
    let b = trials(&AgentPolicy::epsilon_greedy(0.3), &task, 3, 150);
    assert_eq!(a, b);
    let mut x = Vec::new();
    let mut y = Vec::new();
    a[0].write_jsonl(&mut x).unwrap();
    b[0].write_jsonl(&mut y).unwrap();
    assert_eq!(x, y);
}

fn logged(task: &Task, policy: &AgentPolicy, path: &std::path::Path, horizon: usize, resume: bool) -> TrialLog {
    let mut agent = Agent::new(policy.clone(), task, None).unwrap();
    let m = trial_manifest(&agent, task, "t", 0, 99, horizon);
    run_trial_logged(&mut agent, task, m, path, resume).unwrap()
}

#[test]
fn resume_after_torn_write_matches_uninterrupted() {
    let dir = tempfile::tempdir().unwrap();
    let task = easy5();
    let policy = AgentPolicy::epsilon_greedy(0.2);
    let full_path = dir.path().join("full.jsonl");
    let full = logged(&task, &policy, &full_path, 120, false);

    // keep the manifest and 40 steps, then half of the next line
    let text = std::fs::read_to_string(&full_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let cut = dir.path().join("cut.jsonl");
    let mut f = std::fs::File::create(&cut).unwrap();
    for l in &lines[..41] {
        writeln!(f, "{l}").unwrap();
    }
    write!(f, "{}", &lines[41][..lines[41].len() / 2]).unwrap();
    drop(f);

    let resumed = logged(&task, &policy, &cut, 120, true);
    assert_eq!(resumed, full);
    assert_eq!(std::fs::read_to_string(&cut).unwrap(), text);
    // a complete log is returned untouched
    assert_eq!(logged(&task, &policy, &cut, 120, true), full);
}

#[test]
fn resume_rejects_a_foreign_log() {
    let dir = tempfile::tempdir().unwrap();
    let task = easy5();
    let path = dir.path().join("log.jsonl");
    logged(&task, &AgentPolicy::ucb(), &path, 50, false);
    let mut agent = Agent::new(AgentPolicy::epsilon_greedy(0.1), &task, None).unwrap();
    let m = trial_manifest(&agent, &task, "t", 0, 99, 50);
    assert!(run_trial_logged(&mut agent, &task, m, &path, true).is_err());
}

#[test]
fn textual_resume_does_not_call_the_backend_for_logged_steps() {
    let dir = tempfile::tempdir().unwrap();
    let task = easy5();
    let scenario = Scenario::for_task(&task).unwrap();
    let policy = AgentPolicy::textual(PolicyKind::TextualMock, Textualization::Ag);
    let path = dir.path().join("ag.jsonl");
    let mock = Arc::new(MockBackend::new(scenario.clone(), Textualization::Ag));
    let mut agent = Agent::new(policy.clone(), &task, Some(mock)).unwrap();
    let m = trial_manifest(&agent, &task, "t", 0, 5, 30);
    let full = run_trial_logged(&mut agent, &task, m, &path, false).unwrap();

    // keep 20 steps; a backend that cannot answer must not be consulted for them
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: String = text.lines().take(21).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, kept).unwrap();
    let replies: Vec<String> = full.steps[20..].iter().map(|s| scenario.action_names[s.arm].clone()).collect();
    let scripted = Arc::new(ScriptedBackend::new(replies));
    let mut agent = Agent::new(policy, &task, Some(scripted)).unwrap();
    // the scripted backend fingerprints differently, so resume under the
    // original manifest
    let resumed = run_trial_logged(&mut agent, &task, full.manifest.clone(), &path, true).unwrap();
    assert_eq!(
        resumed.steps.iter().map(|s| s.arm).collect::<Vec<_>>(),
        full.steps.iter().map(|s| s.arm).collect::<Vec<_>>()
    );
}

#[test]
fn cassette_replays_a_recorded_trial() {
    let task = easy5();
    let scenario = Scenario::for_task(&task).unwrap();
    let policy = AgentPolicy::textual(PolicyKind::TextualMock, Textualization::Sh);
    let mock = MockBackend::new(scenario.clone(), Textualization::Sh);

    let mut probe = Agent::new(policy.clone(), &task, Some(Arc::new(mock.clone()))).unwrap();
    let m = trial_manifest(&probe, &task, "t", 0, 8, 25);
    let original = run_trial(&mut probe, &task, m).unwrap();

    // rebuild the prompts the agent saw and pair them with the mock's answers
    let mut replay = Agent::new(policy.clone(), &task, Some(Arc::new(mock.clone()))).unwrap();
    let mut pairs = Vec::new();
    let seeds = derive_seed(8, "context", 0);
    for (t, s) in original.steps.iter().enumerate() {
        let ctx = task
            .next_context(&mut explore_core::seed::step_rng(seeds, t as u64))
            .unwrap();
        let prompt = replay.prompt(&ctx).unwrap();
        pairs.push((prompt.clone(), scenario.action_names[mock.choose(&prompt).unwrap()].clone()));
        replay.replay(&ctx, s.arm, s.reward).unwrap();
    }
    let cassette = Arc::new(CassetteBackend::from_pairs(pairs));
    let mut agent = Agent::new(policy, &task, Some(cassette)).unwrap();
    let m = trial_manifest(&agent, &task, "t", 0, 8, 25);
    let again = run_trial(&mut agent, &task, m).unwrap();
    assert_eq!(
        again.steps.iter().map(|s| s.arm).collect::<Vec<_>>(),
        original.steps.iter().map(|s| s.arm).collect::<Vec<_>>()
    );
}

fn mab_spec(name: &str, n: usize, horizon: usize, t: Textualization, task: &Task) -> DatasetSpec {
    DatasetSpec {
        name: name.into(),
        config: "bernoulli-easy-k5-videos".into(),
        textualization: t,
        trajectories: n,
        horizon,
        seed: 21,
        settings: OracleSettings::for_task(task),
    }
}

#[test]
fn datasets_are_byte_identical_per_seed() {
    let task = easy5();
    let scenario = Scenario::for_task(&task).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for t in [Textualization::Rh, Textualization::Sh, Textualization::Ag] {
        let spec = mab_spec("d", 3, 40, t, &task);
        let ma = write_dataset(a.path(), &task, &scenario, &spec).unwrap();
        let mb = write_dataset(b.path(), &task, &scenario, &spec).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ma.records, 120);
        let fa = std::fs::read(a.path().join("d.jsonl")).unwrap();
        let fb = std::fs::read(b.path().join("d.jsonl")).unwrap();
        assert_eq!(fa, fb);
    }
}

#[test]
fn single_trajectory_dataset_and_trajectory_file() {
    let task = easy5();
    let scenario = Scenario::for_task(&task).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let spec = mab_spec("one", 1, 30, Textualization::Rh, &task);
    let manifest = write_dataset(dir.path(), &task, &scenario, &spec).unwrap();
    assert_eq!((manifest.trajectories, manifest.records), (1, 30));
    let text = std::fs::read_to_string(dir.path().join("one.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 30);
    let trajs = read_trajectories(&dir.path().join("one.trajectories.jsonl")).unwrap();
    assert_eq!(trajs.len(), 1);
    replay_check(&task, spec.settings, &trajs[0]).unwrap();
}

#[test]
fn tampered_trajectory_fails_replay() {
    let task = easy5();
    let settings = OracleSettings::for_task(&task);
    let mut trajs = generate_trajectories(&task, settings, "c", 1, 50, Textualization::Rh, 4).unwrap();
    let k = task.num_arms();
    trajs[0].steps[30].arm = (trajs[0].steps[30].arm + 1) % k;
    assert!(replay_check(&task, settings, &trajs[0]).is_err());
}

#[test]
fn fewshot_block_holds_requested_demos() {
    let task = easy5();
    let scenario = Scenario::for_task(&task).unwrap();
    let settings = OracleSettings::for_task(&task);
    let trajs = generate_trajectories(&task, settings, "c", 5, 60, Textualization::Rh, 4).unwrap();
    let mut rng = rng_from_seed(1);
    let block = build_fewshot_block(&task, &scenario, settings, &trajs, 5, (6, 12), &mut rng).unwrap();
    assert_eq!(block.matches("Which video will you choose next?").count(), 5);
    let again = build_fewshot_block(&task, &scenario, settings, &trajs, 5, (6, 12), &mut rng_from_seed(1)).unwrap();
    assert_eq!(block, again);
}

#[test]
fn contextual_dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_corpus(dir.path(), 80, 30, 2).unwrap();
    let instance = build_cb_instance(CbConfig {
        num_actions: 10,
        embed_dim: 5,
        seed: 2,
        dataset: paths,
        user_split: 0.2,
    })
    .unwrap();
    let task = Task::MovieLens(MovieLensTask {
        instance: Arc::new(instance),
        split: Split::Train,
    });
    let scenario = Scenario::for_task(&task).unwrap();
    let out = dir.path().join("out");
    for t in [Textualization::Rh, Textualization::Ag] {
        let spec = DatasetSpec {
            name: format!("cb-{}", t.as_str()),
            config: "movielens".into(),
            textualization: t,
            trajectories: 2,
            horizon: 25,
            seed: 5,
            settings: OracleSettings::for_task(&task),
        };
        let m = write_dataset(&out, &task, &scenario, &spec).unwrap();
        assert_eq!(m.records, 50);
        for traj in read_trajectories(&out.join(&m.trajectories_file)).unwrap() {
            assert!(traj.steps.iter().all(|s| s.user.is_some()));
            replay_check(&task, spec.settings, &traj).unwrap();
        }
    }
    // SH has no contextual form
    let settings = OracleSettings::for_task(&task);
    assert!(generate_trajectories(&task, settings, "c", 1, 5, Textualization::Sh, 1).is_err());
}
