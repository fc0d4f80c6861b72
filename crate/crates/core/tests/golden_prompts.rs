//! Rendered prompts compared byte for byte against transcribed fixtures.

#[path = "support/golden.rs"]
mod golden;

#[test]
fn video_bernoulli_raw_history() {
    golden::video_bernoulli_raw_history();
}

#[test]
fn clothes_bernoulli_raw_history() {
    golden::clothes_bernoulli_raw_history();
}

#[test]
fn video_gaussian_full_precision() {
    golden::video_gaussian_full_precision();
}

#[test]
fn clothes_gaussian_full_precision() {
    golden::clothes_gaussian_full_precision();
}

#[test]
fn video_bernoulli_algorithm_guided() {
    golden::video_bernoulli_algorithm_guided();
}

#[test]
fn clothes_bernoulli_algorithm_guided() {
    golden::clothes_bernoulli_algorithm_guided();
}

#[test]
fn summarized_history_drops_values() {
    golden::summarized_history_drops_values();
}

#[test]
fn algorithm_guided_requires_values() {
    golden::algorithm_guided_requires_values();
}

#[test]
fn movies_raw_history() {
    golden::movies_raw_history();
}

#[test]
fn movies_algorithm_guided() {
    golden::movies_algorithm_guided();
}

#[test]
fn movies_history_window_keeps_latest() {
    golden::movies_history_window_keeps_latest();
}

#[test]
fn fewshot_video_demonstrations() {
    golden::fewshot_video_demonstrations();
}

#[test]
fn fewshot_clothes_demonstrations_on_video_task() {
    golden::fewshot_clothes_demonstrations_on_video_task();
}

#[test]
fn empty_history_and_empty_fewshot() {
    golden::empty_history_and_empty_fewshot();
}

#[test]
fn unknown_action_is_a_rendering_error() {
    golden::unknown_action_is_a_rendering_error();
}
