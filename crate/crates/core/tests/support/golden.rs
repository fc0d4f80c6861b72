//! Golden prompt checks shared by the integration tests and the acceptance run.

use explore_core::classical::{ArmValue, Bonus};
use explore_core::distill::assemble_fewshot;
use explore_core::env::{ActionDomain, CbContext, Gender, UserProfile};
use explore_core::textual::{
    render_ag, render_cb, render_rh, render_sh, ArmSummary, CbView, HistoryRecord, Scenario, ScenarioKind,
    SummaryStats, Textualization,
};

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn history(scenario: &Scenario, arms: &[usize], rewards: &[f64]) -> Vec<HistoryRecord> {
    arms.iter()
        .zip(rewards)
        .enumerate()
        .map(|(i, (&arm, &reward))| HistoryRecord {
            step: i + 1,
            context: None,
            arm,
            action: scenario.action_names[arm].clone(),
            reward,
            values: None,
        })
        .collect()
}

#[track_caller]
fn assert_text(got: &str, want: &str) {
    if got != want {
        let line = got
            .lines()
            .zip(want.lines())
            .position(|(a, b)| a != b)
            .unwrap_or_else(|| got.lines().count().min(want.lines().count()));
        panic!(
            "rendered text differs at line {}\n got: {:?}\nwant: {:?}",
            line + 1,
            got.lines().nth(line),
            want.lines().nth(line)
        );
    }
}

pub fn video_bernoulli_raw_history() {
    let s = Scenario::mab(ActionDomain::Videos, names(&["A", "B", "AI", "BS", "E"])).unwrap();
    let h = history(&s, &[0, 1, 2, 3, 4, 0], &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    assert_text(
        &render_rh(&s, &h, "").unwrap(),
        include_str!("../fixtures/mab_video_bernoulli_rh.txt"),
    );
}

pub fn clothes_bernoulli_raw_history() {
    let s = Scenario::mab(
        ActionDomain::Clothes,
        names(&[
            "Midnight Mirage Trousers",
            "Opulent Oasis Overcoat",
            "Infinite Impeccable Jacket",
            "Supreme Spectrum Slippers",
            "Bejeweled Bloom Blazer",
        ]),
    )
    .unwrap();
    let h = history(&s, &[0, 1, 2, 3, 4, 1], &[0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
    assert_text(
        &render_rh(&s, &h, "").unwrap(),
        include_str!("../fixtures/mab_clothes_bernoulli_rh.txt"),
    );
}

pub fn video_gaussian_full_precision() {
    let s = Scenario::mab(ActionDomain::Videos, names(&["A", "CX", "AF", "AQ", "S"])).unwrap();
    let h = history(
        &s,
        &[0, 1, 2, 3, 4, 3],
        &[
            2.0205556227286694,
            5.046038662976072,
            -4.043037070451992,
            5.937910707405409,
            -4.856036829535051,
            6.2468398842187405,
        ],
    );
    assert_text(
        &render_rh(&s, &h, "").unwrap(),
        include_str!("../fixtures/mab_video_gaussian_rh.txt"),
    );
}

pub fn clothes_gaussian_full_precision() {
    let s = Scenario::mab(
        ActionDomain::Clothes,
        names(&[
            "Midnight Mirage Trousers",
            "Dapper Dreams Denim",
            "Infinite Impeccable Jacket",
            "Supreme Spectrum Slippers",
            "Bejeweled Bloom Blazer",
        ]),
    )
    .unwrap();
    let h = history(
        &s,
        &[0, 1, 2, 3, 4, 2],
        &[
            -3.701605707528312,
            1.4965799995904072,
            4.576557137862691,
            -0.32883145604929176,
            1.5907554114707747,
            6.534020380965033,
        ],
    );
    assert_text(
        &render_rh(&s, &h, "").unwrap(),
        include_str!("../fixtures/mab_clothes_gaussian_rh.txt"),
    );
}

/// Four plays over five arms, one arm never pulled, every bonus shown as 1.
fn four_play_stats(with_values: bool) -> SummaryStats {
    let counts = [1, 1, 1, 0, 1];
    let means = [Some(0.0), Some(1.0), Some(0.0), None, Some(0.0)];
    SummaryStats {
        steps: 4,
        arms: counts
            .iter()
            .zip(means)
            .map(|(&count, mean)| ArmSummary {
                count,
                mean,
                value: with_values.then(|| ArmValue {
                    exploit: mean.unwrap_or(0.0),
                    explore: Bonus::Finite(1.0),
                }),
            })
            .collect(),
    }
}

pub fn video_bernoulli_algorithm_guided() {
    let s = Scenario::mab(ActionDomain::Videos, names(&["AA", "BS", "BW", "CQ", "CP"])).unwrap();
    assert_text(
        &render_ag(&s, &four_play_stats(true), "").unwrap(),
        include_str!("../fixtures/mab_video_bernoulli_ag.txt"),
    );
}

pub fn clothes_bernoulli_algorithm_guided() {
    let s = Scenario::mab(
        ActionDomain::Clothes,
        names(&[
            "Stellar Sheen Shawl",
            "Faithful Fantasy Frock",
            "Supreme Sylvan Sandals",
            "Bespoke Bliss Blouse",
            "Silk Spectrum Slip",
        ]),
    )
    .unwrap();
    assert_text(
        &render_ag(&s, &four_play_stats(true), "").unwrap(),
        include_str!("../fixtures/mab_clothes_bernoulli_ag.txt"),
    );
}

pub fn summarized_history_drops_values() {
    let s = Scenario::mab(ActionDomain::Videos, names(&["AA", "BS", "BW", "CQ", "CP"])).unwrap();
    let text = render_sh(&s, &four_play_stats(false), "").unwrap();
    let expected = include_str!("../fixtures/mab_video_bernoulli_ag.txt")
        .replace(", exploration bonus 1.00, exploitation value 0.00", "")
        .replace(", exploration bonus 1.00, exploitation value 1.00", "");
    assert_text(&text, &expected);
    assert!(text.contains("BS video, 1 time, avg reward 1\n"));
    assert!(text.contains("CQ video, avg reward 0\n"));
}

pub fn algorithm_guided_requires_values() {
    let s = Scenario::mab(ActionDomain::Videos, names(&["AA", "BS", "BW", "CQ", "CP"])).unwrap();
    assert!(render_ag(&s, &four_play_stats(false), "").is_err());
}

const MOVIES: [(&str, &str); 10] = [
    ("American Beauty (1999)", "Comedy|Drama"),
    ("Star Wars: Episode IV - A New Hope (1977)", "Action|Adventure|Fantasy|Sci-Fi"),
    ("Star Wars: Episode V - The Empire Strikes Back (1980)", "Action|Adventure|Drama|Sci-Fi|War"),
    ("Star Wars: Episode VI - Return of the Jedi (1983)", "Action|Adventure|Romance|Sci-Fi|War"),
    ("Jurassic Park (1993)", "Action|Adventure|Sci-Fi"),
    ("Saving Private Ryan (1998)", "Action|Drama|War"),
    ("Terminator 2: Judgment Day (1991)", "Action|Sci-Fi|Thriller"),
    ("The Matrix (1999)", "Action|Sci-Fi|Thriller"),
    ("Back to the Future (1985)", "Comedy|Sci-Fi"),
    ("The Silence of the Lambs (1991)", "Drama|Thriller"),
];

fn movie_scenario() -> Scenario {
    Scenario::new(
        ScenarioKind::CbMovies,
        MOVIES.iter().map(|(t, _)| t.to_string()).collect(),
        MOVIES.iter().map(|(t, g)| format!("{t} ({g})")).collect(),
    )
    .unwrap()
}

fn user(id: usize, age: u32, occupation: &str, location: &str, preference: [f64; 5]) -> CbContext {
    CbContext {
        user: id,
        profile: UserProfile {
            user_id: id as u32,
            gender: Gender::Male,
            age,
            occupation: occupation.into(),
            zip: String::new(),
            location: location.into(),
        },
        preference: preference.to_vec(),
    }
}

fn users() -> [CbContext; 5] {
    [
        user(
            1,
            18,
            "college/grad student",
            "Pulaski county, AR",
            [
                -0.011492758058011532,
                0.027099572122097015,
                -0.020118921995162964,
                -0.002230832353234291,
                -0.003236030228435993,
            ],
        ),
        user(
            2,
            25,
            "sales/marketing",
            "Solano county, CA",
            [
                -0.00312434253282845,
                0.0017211971571668983,
                0.0015880014980211854,
                0.012064018286764622,
                0.009061760269105434,
            ],
        ),
        user(
            3,
            56,
            "sales/marketing",
            "Jefferson county, KY",
            [
                -0.009686884470283985,
                0.028794225305318832,
                -0.011435767635703087,
                0.006439171731472015,
                -0.010343835689127445,
            ],
        ),
        user(
            4,
            25,
            "executive/managerial",
            "Washington county, DC",
            [
                -0.010095382109284401,
                0.010144174098968506,
                -0.01811344549059868,
                -0.009553882293403149,
                -0.012143188156187534,
            ],
        ),
        user(
            5,
            35,
            "lawyer",
            "Camden county, NJ",
            [
                -0.009149148128926754,
                -0.00417252816259861,
                0.011747784912586212,
                -0.012008273974061012,
                -0.006486567202955484,
            ],
        ),
    ]
}

fn cb_history(s: &Scenario, plays: &[(usize, f64)], values: Option<Vec<Vec<ArmValue>>>) -> Vec<HistoryRecord> {
    let us = users();
    plays
        .iter()
        .enumerate()
        .map(|(i, &(arm, reward))| HistoryRecord {
            step: i + 1,
            context: Some(us[i].clone()),
            arm,
            action: s.action_names[arm].clone(),
            reward,
            values: values.as_ref().map(|v| v[i].clone()),
        })
        .collect()
}

/// Equal exploration value everywhere, zero exploitation except where noted.
fn side_info(explore: f64, exceptions: &[(usize, f64)]) -> Vec<ArmValue> {
    (0..10)
        .map(|a| ArmValue {
            explore: Bonus::Finite(explore),
            exploit: exceptions.iter().find(|(i, _)| *i == a).map_or(0.0, |e| e.1),
        })
        .collect()
}

pub fn movies_raw_history() {
    let s = movie_scenario();
    let h = cb_history(&s, &[(5, 4.735634), (4, 0.0), (5, 5.0), (5, 3.953174)], None);
    let current = &users()[4];
    let view = CbView {
        history: &h,
        current,
        current_values: None,
        interactions: None,
    };
    assert_text(
        &render_cb(&s, Textualization::Rh, &view, "").unwrap(),
        include_str!("../fixtures/cb_movies_rh.txt"),
    );
}

pub fn movies_algorithm_guided() {
    let s = movie_scenario();
    let values = vec![
        side_info(0.018, &[]),
        side_info(0.008, &[(9, -0.0001)]),
        side_info(0.017, &[(0, -0.0002), (9, 0.005)]),
        side_info(0.014, &[(9, 0.006)]),
    ];
    let h = cb_history(&s, &[(9, 4.121133), (0, 0.0), (9, 3.9708314), (9, 1.0985798)], Some(values));
    let current_values = side_info(0.010, &[(9, -0.001)]);
    let view = CbView {
        history: &h,
        current: &users()[4],
        current_values: Some(&current_values),
        // the published figure reports two interactions above four records
        interactions: Some(2),
    };
    assert_text(
        &render_cb(&s, Textualization::Ag, &view, "").unwrap(),
        include_str!("../fixtures/cb_movies_ag.txt"),
    );
}

pub fn movies_history_window_keeps_latest() {
    let s = movie_scenario().with_history_window(Some(2));
    let h = cb_history(&s, &[(5, 4.735634), (4, 0.0), (5, 5.0), (5, 3.953174)], None);
    let view = CbView {
        history: &h,
        current: &users()[4],
        current_values: None,
        interactions: None,
    };
    let text = render_cb(&s, Textualization::Rh, &view, "").unwrap();
    assert!(text.contains("interacted 4 times"));
    assert!(!text.contains("Pulaski county"));
    assert!(text.contains("Washington county"));
}

fn demo(lines: &[&str], answer: &str) -> (String, String) {
    let question = "Which video will you choose next? PLEASE RESPOND ONLY WITH A, B, C, D, E AND NO TEXT EXPLANATION.";
    (format!("{}\n\n{question}", lines.join("\n")), answer.to_string())
}

const VIDEO_PREFIX: [&str; 6] = [
    "A video, reward 1",
    "B video, reward 1",
    "AI video, reward 1",
    "BS video, reward 0",
    "E video, reward 0",
    "A video, reward 0",
];

pub fn fewshot_video_demonstrations() {
    let mut longer = VIDEO_PREFIX.to_vec();
    longer.extend(["B video, reward 0", "AI video, reward 1", "AI video, reward 0"]);
    let block = assemble_fewshot(&[demo(&VIDEO_PREFIX, "B"), demo(&longer, "AI")]);
    let s = Scenario::mab(ActionDomain::Videos, names(&["A", "B", "AI", "BS", "E"])).unwrap();
    let h = history(&s, &[0, 1, 2, 3, 4, 0], &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    assert_text(
        &render_rh(&s, &h, &block).unwrap(),
        include_str!("../fixtures/fewshot_video_demos_rh.txt"),
    );
}

pub fn fewshot_clothes_demonstrations_on_video_task() {
    let first = [
        "Midnight Mirage Trousers item, reward 1",
        "Titanic Tempest Tunic item, reward 0",
        "Infinite Impeccable Jacket item, reward 1",
        "Supreme Spectrum Slippers item, reward 0",
        "Bejeweled Bloom Blazer item, reward 0",
        "Midnight Mirage Trousers item, reward 0",
    ];
    let mut second = first.to_vec();
    second.extend([
        "Infinite Impeccable Jacket item, reward 0",
        "Midnight Mirage Trousers item, reward 0",
        "Infinite Impeccable Jacket item, reward 0",
    ]);
    let block = assemble_fewshot(&[
        demo(&first, "Infinite Impeccable Jacket"),
        demo(&second, "Titanic Tempest Tunic"),
    ]);
    let s = Scenario::mab(ActionDomain::Videos, names(&["A", "B", "AI", "BS", "E"])).unwrap();
    let h = history(&s, &[0, 1, 2, 3, 4, 0], &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    assert_text(
        &render_rh(&s, &h, &block).unwrap(),
        include_str!("../fixtures/fewshot_clothes_demos_rh.txt"),
    );
}

pub fn empty_history_and_empty_fewshot() {
    let s = Scenario::mab(ActionDomain::Videos, names(&["A", "B"])).unwrap();
    let text = render_rh(&s, &[], &assemble_fewshot(&[])).unwrap();
    assert!(text.contains("So far you have played 0 times with the following choices and rewards:\n\n\nWhich video"));
}

pub fn unknown_action_is_a_rendering_error() {
    let s = Scenario::mab(ActionDomain::Videos, names(&["A", "B"])).unwrap();
    let bad = vec![HistoryRecord {
        step: 1,
        context: None,
        arm: 0,
        action: "Z".into(),
        reward: 1.0,
        values: None,
    }];
    assert!(render_rh(&s, &bad, "").is_err());
}

/// Every golden check, by name.
#[allow(dead_code)]
pub const CASES: &[(&str, fn())] = &[
    ("video_bernoulli_raw_history", video_bernoulli_raw_history),
    ("clothes_bernoulli_raw_history", clothes_bernoulli_raw_history),
    ("video_gaussian_full_precision", video_gaussian_full_precision),
    ("clothes_gaussian_full_precision", clothes_gaussian_full_precision),
    ("video_bernoulli_algorithm_guided", video_bernoulli_algorithm_guided),
    ("clothes_bernoulli_algorithm_guided", clothes_bernoulli_algorithm_guided),
    ("summarized_history_drops_values", summarized_history_drops_values),
    ("algorithm_guided_requires_values", algorithm_guided_requires_values),
    ("movies_raw_history", movies_raw_history),
    ("movies_algorithm_guided", movies_algorithm_guided),
    ("movies_history_window_keeps_latest", movies_history_window_keeps_latest),
    ("fewshot_video_demonstrations", fewshot_video_demonstrations),
    ("fewshot_clothes_demonstrations_on_video_task", fewshot_clothes_demonstrations_on_video_task),
    ("empty_history_and_empty_fewshot", empty_history_and_empty_fewshot),
    ("unknown_action_is_a_rendering_error", unknown_action_is_a_rendering_error),
];
