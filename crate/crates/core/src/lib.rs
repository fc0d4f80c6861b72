//! Bandit benchmark engine for in-context exploration.
//!
//! The crate is organised bottom-up:
//!
//! * [`env`] builds multi-armed and contextual bandit tasks (including the
//!   MovieLens-backed task with its truncated-SVD reward model).
//! * [`classical`] holds the UCB / LinUCB oracles and an epsilon-greedy
//!   baseline.
//! * [`textual`] renders interaction histories into prompt text and parses
//!   replies back into arms.
//! * [`agent`] wraps classical policies, prompt-driven mocks and remote
//!   chat-completion backends behind one interface.
//! * [`distill`] turns oracle rollouts into few-shot blocks and fine-tuning
//!   datasets.
//! * [`eval`] runs trials and computes regret, exploration metrics and
//!   pairwise win-rates.
//! * [`analysis`] fits the parametric regret model and classifies growth.

pub mod agent;
pub mod analysis;
pub mod classical;
pub mod distill;
pub mod env;
pub mod error;
pub mod eval;
pub mod seed;
pub mod textual;

pub use error::{Error, Result};
