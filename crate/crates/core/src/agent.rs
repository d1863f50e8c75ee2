//! One agent's AIMD update.
//!
//! Suppliers and consumers run the same rule with their own parameters: on a
//! capacity signal the agent backs off multiplicatively with a probability
//! driven by its marginal utility at its long-term average; otherwise it
//! moves additively toward its private optimum.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::UtilityError;
use crate::utility::Utility;

/// Running averages below this are treated as "no history" and never back off.
pub const MIN_AVERAGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Supplier,
    Consumer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Supplier => "supplier",
            Role::Consumer => "consumer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// AIMD constants for one side of the market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoleParams {
    /// Additive step.
    pub alpha: f64,
    /// Multiplicative back-off factor, in (0, 1).
    pub beta: f64,
    /// Network constant scaling the back-off probability.
    pub gamma: f64,
}

impl RoleParams {
    /// Returns the list of violated constraints, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            out.push(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            out.push(format!("beta must be in (0, 1), got {}", self.beta));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            out.push(format!("gamma must be >= 0, got {}", self.gamma));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    MultiplicativeDecrease,
    AdditiveIncrease,
    AdditiveDecrease,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::MultiplicativeDecrease => "multiplicative_decrease",
            Branch::AdditiveIncrease => "additive_increase",
            Branch::AdditiveDecrease => "additive_decrease",
        }
    }
}

/// What happened inside one agent during one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentStepTrace {
    /// Back-off probability used this round; 0 when no signal arrived.
    pub lambda: f64,
    /// Realized Bernoulli outcome.
    pub bernoulli: bool,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub role: Role,
    pub quantity: f64,
    pub running_average: f64,
    pub rounds_elapsed: u64,
    pub utility: Utility,
}

/// Mean over `prev_rounds + 1` samples given the mean of the first
/// `prev_rounds` samples.
pub fn update_running_average(prev_average: f64, prev_rounds: u64, new_quantity: f64) -> f64 {
    let t = prev_rounds as f64;
    (prev_average * t + new_quantity) / (t + 1.0)
}

/// Probability of answering a capacity signal, `gamma * u'(avg) / avg`
/// clamped into [0, 1].
pub fn backoff_probability(utility: &Utility, running_average: f64, gamma: f64) -> f64 {
    if gamma == 0.0 || running_average < MIN_AVERAGE {
        return 0.0;
    }
    match utility.derivative(running_average) {
        Ok(slope) => {
            let raw = gamma * slope / running_average;
            if raw.is_nan() {
                0.0
            } else {
                raw.clamp(0.0, 1.0)
            }
        }
        Err(UtilityError::UnboundedDerivative) => 1.0,
        // Negative averages cannot occur; quantities are floored at zero.
        Err(_) => 0.0,
    }
}

impl AgentState {
    /// Builds the round-0 state.
    ///
    /// No signal exists before round 1, so the agent takes one unsignaled
    /// additive move from `initial_quantity`; the result is x(0) and seeds the
    /// running average.
    pub fn initialize(
        id: AgentId,
        role: Role,
        utility: Utility,
        initial_quantity: f64,
        params: &RoleParams,
    ) -> (Self, AgentStepTrace) {
        let (quantity, branch) = additive_move(&utility, initial_quantity.max(0.0), params.alpha);
        let state = AgentState {
            id,
            role,
            quantity,
            running_average: quantity,
            rounds_elapsed: 0,
            utility,
        };
        let trace = AgentStepTrace {
            lambda: 0.0,
            bernoulli: false,
            branch,
        };
        (state, trace)
    }

    pub fn backoff_probability(&self, params: &RoleParams) -> f64 {
        backoff_probability(&self.utility, self.running_average, params.gamma)
    }

    /// Advances this agent by one round.
    ///
    /// `uniform` is a variate in [0, 1) used for the Bernoulli trial; the
    /// agent backs off iff a signal arrived and `uniform < lambda`.
    pub fn step(&self, signal: bool, params: &RoleParams, uniform: f64) -> (Self, AgentStepTrace) {
        let lambda = if signal {
            self.backoff_probability(params)
        } else {
            0.0
        };
        let bernoulli = signal && uniform < lambda;

        let (quantity, branch) = if bernoulli {
            (self.quantity * params.beta, Branch::MultiplicativeDecrease)
        } else {
            additive_move(&self.utility, self.quantity, params.alpha)
        };

        let rounds_elapsed = self.rounds_elapsed + 1;
        let next = AgentState {
            quantity,
            running_average: update_running_average(self.running_average, rounds_elapsed, quantity),
            rounds_elapsed,
            ..self.clone()
        };
        (
            next,
            AgentStepTrace {
                lambda,
                bernoulli,
                branch,
            },
        )
    }
}

/// Moves `quantity` by `alpha` toward the utility's optimum. Ties increase;
/// functions without a finite optimum always increase.
fn additive_move(utility: &Utility, quantity: f64, alpha: f64) -> (f64, Branch) {
    match utility.argmax() {
        Some(opt) if quantity > opt => ((quantity - alpha).max(0.0), Branch::AdditiveDecrease),
        _ => (quantity + alpha, Branch::AdditiveIncrease),
    }
}
