//! One interface over classical policies and prompt-driven agents.

pub mod backend;
pub mod mock;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classical::{epsilon_greedy_select, ArmValue, LinUcbState, UcbState, DEFAULT_ALPHA, DEFAULT_RIDGE};
use crate::env::{Observation, StepContext, Task, TaskFamily};
use crate::seed::fingerprint;
use crate::textual::{parse_action, render_prompt, HistoryRecord, PromptInput, Scenario, SummaryStats, Textualization};
use crate::{Error, Result};

pub use backend::{
    prompt_digest, Backend, BackendError, BackendReply, BackendRequest, CassetteBackend, HttpBackend, HttpConfig,
    RecordingBackend, ScriptedBackend, DEFAULT_TEMPERATURE,
};
pub use mock::MockBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    ClassicalUcb,
    ClassicalLinUcb,
    EpsilonGreedy,
    TextualMock,
    RemoteLlm,
}

impl PolicyKind {
    pub fn is_textual(self) -> bool {
        matches!(self, PolicyKind::TextualMock | PolicyKind::RemoteLlm)
    }
}

pub const DEFAULT_RETRY_LIMIT: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentPolicy {
    pub kind: PolicyKind,
    pub textualization: Textualization,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fewshot_block: Option<String>,
    pub retry_limit: u32,
    pub alpha: f64,
    pub ridge: f64,
    pub epsilon: f64,
    pub model: String,
    pub temperature: f64,
}

impl Default for AgentPolicy {
    fn default() -> Self {
        Self {
            kind: PolicyKind::ClassicalUcb,
            textualization: Textualization::Rh,
            fewshot_block: None,
            retry_limit: DEFAULT_RETRY_LIMIT,
            alpha: DEFAULT_ALPHA,
            ridge: DEFAULT_RIDGE,
            epsilon: 0.1,
            model: String::new(),
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

impl AgentPolicy {
    pub fn ucb() -> Self {
        Self::default()
    }

    pub fn linucb() -> Self {
        Self {
            kind: PolicyKind::ClassicalLinUcb,
            ..Self::default()
        }
    }

    pub fn epsilon_greedy(epsilon: f64) -> Self {
        Self {
            kind: PolicyKind::EpsilonGreedy,
            epsilon,
            ..Self::default()
        }
    }

    pub fn textual(kind: PolicyKind, textualization: Textualization) -> Self {
        Self {
            kind,
            textualization,
            ..Self::default()
        }
    }

    pub fn with_fewshot(mut self, block: impl Into<String>) -> Self {
        self.fewshot_block = Some(block.into());
        self
    }

    /// Checks the policy can drive `task`.
    pub fn check_binding(&self, task: &Task) -> Result<()> {
        let family = task.family();
        if self.kind == PolicyKind::ClassicalLinUcb && family != TaskFamily::Contextual {
            return Err(Error::Config("LinUCB needs a contextual task".into()));
        }
        if self.kind.is_textual() {
            if family == TaskFamily::Contextual && self.textualization == Textualization::Sh {
                return Err(Error::Config("summarized history is only defined for multi-armed tasks".into()));
            }
            if matches!(task, Task::Linear(_)) {
                return Err(Error::Config("textual agents need a scenario-backed task".into()));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }
}

/// Outcome of one `act` call.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub arm: usize,
    /// Replies that could not be mapped to an action.
    pub retries: u32,
    /// The arm was drawn uniformly because no reply parsed.
    pub fallback: bool,
    pub reply: Option<String>,
}

impl Decision {
    fn direct(arm: usize) -> Self {
        Self {
            arm,
            retries: 0,
            fallback: false,
            reply: None,
        }
    }
}

/// Per-trial agent state. Owns its classical statistics and history; the
/// backend may be shared.
pub struct Agent {
    policy: AgentPolicy,
    backend: Option<Arc<dyn Backend>>,
    scenario: Option<Scenario>,
    num_arms: usize,
    family: TaskFamily,
    ucb: UcbState,
    linucb: Option<LinUcbState>,
    history: Vec<HistoryRecord>,
    pending_values: Option<Vec<ArmValue>>,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("policy", &self.policy)
            .field("steps", &self.history.len())
            .finish_non_exhaustive()
    }
}

impl Agent {
    pub fn new(policy: AgentPolicy, task: &Task, backend: Option<Arc<dyn Backend>>) -> Result<Self> {
        policy.check_binding(task)?;
        let scenario = if policy.kind.is_textual() {
            Some(Scenario::for_task(task)?)
        } else {
            None
        };
        Self::with_scenario(policy, task, backend, scenario)
    }

    /// Like [`Agent::new`] with an explicitly configured scenario (custom
    /// templates, precision or history window).
    pub fn with_scenario(
        policy: AgentPolicy,
        task: &Task,
        backend: Option<Arc<dyn Backend>>,
        scenario: Option<Scenario>,
    ) -> Result<Self> {
        policy.check_binding(task)?;
        if policy.kind.is_textual() && (backend.is_none() || scenario.is_none()) {
            return Err(Error::Config("textual agents need a backend and a scenario".into()));
        }
        let num_arms = task.num_arms();
        let linucb = match task.feature_dim() {
            Some(d) => Some(LinUcbState::new(num_arms, d, policy.alpha, policy.ridge)?),
            None => None,
        };
        Ok(Self {
            ucb: UcbState::new(num_arms, policy.alpha),
            policy,
            backend,
            scenario,
            num_arms,
            family: task.family(),
            linucb,
            history: Vec::new(),
            pending_values: None,
        })
    }

    pub fn policy(&self) -> &AgentPolicy {
        &self.policy
    }

    pub fn history(&self) -> &[HistoryRecord] {
        &self.history
    }

    pub fn ucb_state(&self) -> &UcbState {
        &self.ucb
    }

    /// Stable identity of policy plus backend.
    pub fn fingerprint(&self) -> String {
        let policy = serde_json::to_string(&self.policy).unwrap_or_default();
        let backend = self.backend.as_ref().map(|b| b.describe()).unwrap_or_default();
        fingerprint(format!("{policy}|{backend}").as_bytes())
    }

    fn features<'a>(&self, ctx: &'a StepContext) -> Result<&'a [Vec<f64>]> {
        ctx.features
            .as_deref()
            .ok_or_else(|| Error::Invalid("contextual step without features".into()))
    }

    fn linucb_values(&self, ctx: &StepContext) -> Result<Vec<ArmValue>> {
        let lin = self.linucb.as_ref().ok_or_else(|| Error::Invalid("no LinUCB state".into()))?;
        let features = self.features(ctx)?;
        (0..self.num_arms).map(|a| lin.arm_value(a, &features[a])).collect()
    }

    /// Chooses an arm for the step described by `ctx`.
    pub fn act<R: Rng + ?Sized>(&mut self, ctx: &StepContext, rng: &mut R) -> Result<Decision> {
        match self.policy.kind {
            PolicyKind::ClassicalUcb => Ok(Decision::direct(self.ucb.select().0)),
            PolicyKind::ClassicalLinUcb => {
                let lin = self.linucb.as_ref().ok_or_else(|| Error::Invalid("no LinUCB state".into()))?;
                Ok(Decision::direct(lin.select(self.features(ctx)?)?.0))
            }
            PolicyKind::EpsilonGreedy => Ok(Decision::direct(epsilon_greedy_select(&self.ucb, self.policy.epsilon, rng)?)),
            PolicyKind::TextualMock | PolicyKind::RemoteLlm => self.act_textual(ctx, rng),
        }
    }

    /// The prompt the agent would be shown for `ctx`.
    pub fn prompt(&mut self, ctx: &StepContext) -> Result<String> {
        let scenario = self.scenario.as_ref().ok_or_else(|| Error::Config("agent has no scenario".into()))?;
        let t = self.policy.textualization;
        let current = match &ctx.observation {
            Observation::User(c) => Some(c),
            _ => None,
        };
        let current_values = if self.family == TaskFamily::Contextual && t == Textualization::Ag {
            Some(self.linucb_values(ctx)?)
        } else {
            None
        };
        let stats = (self.family == TaskFamily::Mab && t != Textualization::Rh)
            .then(|| SummaryStats::from_ucb(&self.ucb, t == Textualization::Ag));
        let input = PromptInput {
            history: &self.history,
            stats: stats.as_ref(),
            current,
            current_values: current_values.as_deref(),
        };
        let prompt = render_prompt(scenario, t, &input, self.policy.fewshot_block.as_deref().unwrap_or(""))?;
        self.pending_values = current_values;
        Ok(prompt)
    }

    fn act_textual<R: Rng + ?Sized>(&mut self, ctx: &StepContext, rng: &mut R) -> Result<Decision> {
        let prompt = self.prompt(ctx)?;
        let backend = self.backend.clone().ok_or_else(|| Error::Config("agent has no backend".into()))?;
        let names = &self.scenario.as_ref().expect("checked at construction").action_names;
        let request = BackendRequest {
            prompt,
            temperature: self.policy.temperature,
            model: self.policy.model.clone(),
        };
        let mut retries = 0;
        let mut last_reply = None;
        for _ in 0..=self.policy.retry_limit {
            let reply = backend.complete(&request)?;
            match parse_action(&reply.text, names) {
                Ok(arm) => {
                    return Ok(Decision {
                        arm,
                        retries,
                        fallback: false,
                        reply: Some(reply.text),
                    })
                }
                Err(_) => {
                    retries += 1;
                    last_reply = Some(reply.text);
                }
            }
        }
        Ok(Decision {
            arm: rng.random_range(0..self.num_arms),
            retries,
            fallback: true,
            reply: last_reply,
        })
    }

    /// Re-applies a logged step without consulting the backend.
    pub fn replay(&mut self, ctx: &StepContext, arm: usize, reward: f64) -> Result<()> {
        if self.policy.kind.is_textual()
            && self.family == TaskFamily::Contextual
            && self.policy.textualization == Textualization::Ag
        {
            self.pending_values = Some(self.linucb_values(ctx)?);
        }
        self.observe(ctx, arm, reward)
    }

    /// Feeds back the realized reward of the arm played in `ctx`.
    pub fn observe(&mut self, ctx: &StepContext, arm: usize, reward: f64) -> Result<()> {
        Error::check_index("arm", arm, self.num_arms)?;
        self.ucb.update(arm, reward)?;
        if let Some(lin) = self.linucb.as_mut() {
            let features = ctx
                .features
                .as_deref()
                .ok_or_else(|| Error::Invalid("contextual step without features".into()))?;
            lin.update(arm, &features[arm], reward)?;
        }
        if let Some(scenario) = &self.scenario {
            let context = match &ctx.observation {
                Observation::User(c) => Some(c.clone()),
                _ => None,
            };
            self.history.push(HistoryRecord {
                step: self.history.len() + 1,
                context,
                arm,
                action: scenario.action_names[arm].clone(),
                reward,
                values: self.pending_values.take(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_mab_instance, ActionDomain, Difficulty, MabConfig, RewardKind};
    use crate::seed::rng_from_seed;

    fn task() -> Task {
        let cfg = MabConfig::new(RewardKind::Bernoulli, Difficulty::Easy, 5, ActionDomain::Videos, 7);
        Task::Mab(Arc::new(make_mab_instance(cfg).unwrap()))
    }

    #[test]
    fn scripted_reply_selects_named_arm() {
        let task = task();
        let name = task.action_names()[4].clone();
        let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new([name]));
        let mut agent = Agent::new(
            AgentPolicy::textual(PolicyKind::RemoteLlm, Textualization::Rh),
            &task,
            Some(backend),
        )
        .unwrap();
        let mut rng = rng_from_seed(1);
        let ctx = task.next_context(&mut rng).unwrap();
        assert_eq!(agent.act(&ctx, &mut rng).unwrap().arm, 4);
    }

    #[test]
    fn garbage_then_valid_counts_retries() {
        let task = task();
        let name = task.action_names()[1].clone();
        let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(["???".to_string(), "no idea".into(), name]));
        let mut agent = Agent::new(
            AgentPolicy::textual(PolicyKind::RemoteLlm, Textualization::Rh),
            &task,
            Some(backend),
        )
        .unwrap();
        let mut rng = rng_from_seed(1);
        let ctx = task.next_context(&mut rng).unwrap();
        let d = agent.act(&ctx, &mut rng).unwrap();
        assert_eq!((d.arm, d.retries, d.fallback), (1, 2, false));
    }

    #[test]
    fn exhausted_retries_fall_back() {
        let task = task();
        let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(["zzz"]).cycling());
        let mut policy = AgentPolicy::textual(PolicyKind::RemoteLlm, Textualization::Rh);
        policy.retry_limit = 2;
        let mut agent = Agent::new(policy, &task, Some(backend)).unwrap();
        let mut rng = rng_from_seed(1);
        let ctx = task.next_context(&mut rng).unwrap();
        let d = agent.act(&ctx, &mut rng).unwrap();
        assert!(d.fallback);
        assert_eq!(d.retries, 3);
        assert!(d.arm < 5);
    }

    #[test]
    fn bindings_are_checked() {
        let task = task();
        assert!(Agent::new(AgentPolicy::linucb(), &task, None).is_err());
        assert!(Agent::new(AgentPolicy::textual(PolicyKind::TextualMock, Textualization::Ag), &task, None).is_err());
    }
}
