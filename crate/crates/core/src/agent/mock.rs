use crate::classical::{argmax_values, ArmValue, Bonus, DEFAULT_ALPHA};
use crate::textual::parse::{parse_raw_history, parse_side_info, parse_summary};
use crate::textual::{Scenario, Textualization};

use super::backend::{Backend, BackendError, BackendReply, BackendRequest};

/// Deterministic agent that reads only the prompt text.
///
/// * AG: argmax of the shown exploitation value plus exploration bonus.
/// * SH: recomputes a UCB index from the shown counts and averages.
/// * RH: repeats the action with the highest most recent reward, doing no
///   aggregation at all; the first listed action when nothing was played.
#[derive(Debug, Clone)]
pub struct MockBackend {
    scenario: Scenario,
    mode: Textualization,
    alpha: f64,
}

impl MockBackend {
    pub fn new(scenario: Scenario, mode: Textualization) -> Self {
        Self {
            scenario,
            mode,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn choose(&self, prompt: &str) -> crate::Result<usize> {
        match self.mode {
            Textualization::Ag if self.scenario.kind.is_contextual() => {
                Ok(argmax_values(&parse_side_info(prompt, &self.scenario)?))
            }
            Textualization::Ag => {
                let summary = parse_summary(prompt, &self.scenario)?;
                let values = summary
                    .arms
                    .iter()
                    .map(|a| a.value.ok_or_else(|| crate::Error::Invalid("AG line without values".into())))
                    .collect::<crate::Result<Vec<_>>>()?;
                Ok(argmax_values(&values))
            }
            Textualization::Sh => {
                let summary = parse_summary(prompt, &self.scenario)?;
                let log_t = (summary.steps.max(1) as f64).ln();
                let values: Vec<ArmValue> = summary
                    .arms
                    .iter()
                    .map(|a| ArmValue {
                        exploit: a.mean,
                        explore: if a.count == 0 {
                            Bonus::Unbounded
                        } else {
                            Bonus::Finite(self.alpha * (log_t / a.count as f64).sqrt())
                        },
                    })
                    .collect();
                Ok(argmax_values(&values))
            }
            Textualization::Rh => {
                let history = parse_raw_history(prompt, &self.scenario)?;
                let mut latest: Vec<Option<f64>> = vec![None; self.scenario.num_actions()];
                for (arm, r) in history {
                    latest[arm] = Some(r);
                }
                let mut best: Option<(usize, f64)> = None;
                for (arm, r) in latest.iter().enumerate() {
                    if let Some(r) = *r {
                        if best.is_none_or(|(_, b)| r > b) {
                            best = Some((arm, r));
                        }
                    }
                }
                Ok(best.map_or(0, |(a, _)| a))
            }
        }
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendReply, BackendError> {
        let arm = self
            .choose(&request.prompt)
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(BackendReply::text(self.scenario.action_names[arm].clone()))
    }

    fn describe(&self) -> String {
        format!("mock-{}", self.mode)
    }
}
