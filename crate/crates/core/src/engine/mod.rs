//! Per-bus distributed iteration over a simulated neighbor exchange.
//!
//! Every bus owns its price `λ_i`, angle `θ_i`, the flow multipliers `μ_ij`
//! of its incident lines in the outgoing direction, and the dispatch of its
//! local generators. A round consists of each bus broadcasting a
//! [`NeighborMessage`] to every adjacent bus and then updating from its own
//! state plus the messages it received.

mod agent;
mod run;
mod system;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{
    balance_residual, update_lambda, update_mu, update_mu_owned, update_pg, update_theta,
    AgentState, Inbox, LocalGenerator, LocalView, NeighborMessage, Port,
};
pub use run::{run, RunConfig, RunOutcome, RunRecord, RunTrace, StopCriterion, StopRule};
pub use system::{step, Engine, Layout, SystemState};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("bus {bus} has no message from neighbor {neighbor}")]
    MissingMessage { bus: usize, neighbor: usize },
    #[error("state does not match the case: {0}")]
    Shape(String),
    #[error("invalid tuning parameter {name} = {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Every update reads only the previous round's values.
    #[default]
    Synchronous,
    /// Buses update in ascending id, each reading values already updated
    /// earlier in the same round.
    Serial,
}

/// Step sizes `(α, β, γ, δ)` and update semantics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    #[serde(default)]
    pub mode: UpdateMode,
    /// Keep the slack angle fixed at zero. When false the slack angle is
    /// updated like every other bus.
    #[serde(default = "default_pin")]
    pub pin_slack: bool,
}

fn default_pin() -> bool {
    true
}

impl TuningParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        TuningParams {
            alpha,
            beta,
            gamma,
            delta,
            mode: UpdateMode::Synchronous,
            pin_slack: true,
        }
    }

    /// Values used for the RTS-24 experiments.
    pub fn rts_reference() -> Self {
        TuningParams::new(0.1485, 0.0056, 0.005, 0.008)
    }

    pub fn with_mode(mut self, mode: UpdateMode) -> Self {
        self.mode = mode;
        self
    }

    /// Checks that every step size is finite and strictly positive.
    pub fn validate(&self) -> Result<(), EngineError> {
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(EngineError::InvalidParam { name, value });
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }
}
