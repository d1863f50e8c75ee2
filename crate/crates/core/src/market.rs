//! The center: aggregates totals, broadcasts the two capacity bits, and
//! advances every agent one synchronous round.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AgentState, AgentStepTrace, Role, RoleParams};
use crate::error::{MarketError, Result};
use crate::metrics::{summarize, RoundRecord, RunSummary};
use crate::scenario::{validate_scenario, MarketConfig, ScenarioSpec};

/// One-bit feedback for each side of the market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CapacitySignals {
    pub supplier_signal: bool,
    pub consumer_signal: bool,
}

/// Which side a capacity signal is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSemantics {
    /// The side in excess is told to back off: suppliers when supply exceeds
    /// consumption, consumers when consumption exceeds supply.
    #[default]
    ExcessSide,
    /// Suppliers are signalled when supply falls short of consumption and
    /// consumers when consumption falls short of supply.
    Inverted,
}

pub fn compute_signals(total_supply: f64, total_consumption: f64) -> CapacitySignals {
    compute_signals_with(total_supply, total_consumption, SignalSemantics::ExcessSide)
}

pub fn compute_signals_with(
    total_supply: f64,
    total_consumption: f64,
    semantics: SignalSemantics,
) -> CapacitySignals {
    let excess_supply = total_supply > total_consumption;
    let excess_consumption = total_consumption > total_supply;
    match semantics {
        SignalSemantics::ExcessSide => CapacitySignals {
            supplier_signal: excess_supply,
            consumer_signal: excess_consumption,
        },
        SignalSemantics::Inverted => CapacitySignals {
            supplier_signal: excess_consumption,
            consumer_signal: excess_supply,
        },
    }
}

/// Source of the per-agent uniform variates that drive the Bernoulli trials.
///
/// Implementations must return the same value for the same `(agent, round)`
/// regardless of call order, so that agent steps can run in any order.
pub trait VariateSource {
    fn uniform(&self, agent: AgentId, round: u64) -> f64;
}

impl<F> VariateSource for F
where
    F: Fn(AgentId, u64) -> f64,
{
    fn uniform(&self, agent: AgentId, round: u64) -> f64 {
        self(agent, round)
    }
}

/// Counter-based streams: ChaCha8 keyed by the master seed, one stream per
/// agent, positioned by round.
#[derive(Debug, Clone, Copy)]
pub struct SeededStreams {
    seed: u64,
}

impl SeededStreams {
    pub fn new(seed: u64) -> Self {
        SeededStreams { seed }
    }
}

impl VariateSource for SeededStreams {
    fn uniform(&self, agent: AgentId, round: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(u64::from(agent.0));
        // one f64 draw consumes two 32-bit words
        rng.set_word_pos(u128::from(round) * 2);
        rng.random::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    pub supplier: RoleParams,
    pub consumer: RoleParams,
    pub semantics: SignalSemantics,
}

impl MarketParams {
    pub fn for_role(&self, role: Role) -> &RoleParams {
        match role {
            Role::Supplier => &self.supplier,
            Role::Consumer => &self.consumer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub suppliers: Vec<AgentState>,
    pub consumers: Vec<AgentState>,
    pub round: u64,
    pub last_total_supply: f64,
    pub last_total_consumption: f64,
}

impl MarketState {
    /// Creates the round-0 market. Suppliers get ids `0..S`, consumers
    /// `S..S+C`.
    pub fn initialize(
        scenario: &ScenarioSpec,
        params: &MarketParams,
        initial_quantity: f64,
    ) -> (Self, RoundRecord) {
        let mut next_id = 0u32;
        let mut spawn = |role: Role, utilities: &[crate::utility::Utility]| {
            utilities
                .iter()
                .map(|u| {
                    let id = AgentId(next_id);
                    next_id += 1;
                    AgentState::initialize(id, role, *u, initial_quantity, params.for_role(role))
                })
                .unzip::<_, _, Vec<_>, Vec<_>>()
        };
        let (suppliers, supplier_traces) = spawn(Role::Supplier, &scenario.supplier_utilities);
        let (consumers, consumer_traces) = spawn(Role::Consumer, &scenario.consumer_utilities);

        let mut state = MarketState {
            suppliers,
            consumers,
            round: 0,
            last_total_supply: 0.0,
            last_total_consumption: 0.0,
        };
        let record = state.record(CapacitySignals::default(), &supplier_traces, &consumer_traces);
        state.last_total_supply = record.total_supply;
        state.last_total_consumption = record.total_consumption;
        (state, record)
    }

    pub fn signals(&self, semantics: SignalSemantics) -> CapacitySignals {
        compute_signals_with(self.last_total_supply, self.last_total_consumption, semantics)
    }

    /// Runs one round of the chain and returns its record.
    pub fn advance(&mut self, params: &MarketParams, variates: &impl VariateSource) -> RoundRecord {
        let signals = self.signals(params.semantics);
        let round = self.round + 1;

        let step_all = |agents: &mut Vec<AgentState>, signal: bool, p: &RoleParams| {
            agents
                .iter_mut()
                .map(|a| {
                    let (next, trace) = a.step(signal, p, variates.uniform(a.id, round));
                    *a = next;
                    trace
                })
                .collect::<Vec<_>>()
        };
        let supplier_traces = step_all(&mut self.suppliers, signals.supplier_signal, &params.supplier);
        let consumer_traces = step_all(&mut self.consumers, signals.consumer_signal, &params.consumer);

        self.round = round;
        let record = self.record(signals, &supplier_traces, &consumer_traces);
        self.last_total_supply = record.total_supply;
        self.last_total_consumption = record.total_consumption;
        record
    }

    fn record(
        &self,
        signals: CapacitySignals,
        supplier_traces: &[AgentStepTrace],
        consumer_traces: &[AgentStepTrace],
    ) -> RoundRecord {
        let agents = self
            .suppliers
            .iter()
            .zip(supplier_traces)
            .chain(self.consumers.iter().zip(consumer_traces));
        RoundRecord::capture(self.round, agents, signals)
    }
}

/// Everything produced by one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub config: MarketConfig,
    /// Round-0 snapshot (no signals).
    pub initial: RoundRecord,
    /// Rounds `1..=horizon`.
    pub records: Vec<RoundRecord>,
    pub summary: RunSummary,
}

/// Validates, initializes and advances `config.horizon` rounds, handing every
/// record (round 0 included) to `observe` instead of storing it.
///
/// Returns the final market state.
pub fn run_streaming(
    config: &MarketConfig,
    scenario: &ScenarioSpec,
    mut observe: impl FnMut(&RoundRecord),
) -> Result<MarketState> {
    let violations = validate_scenario(scenario, config);
    if !violations.is_empty() {
        return Err(MarketError::InvalidConfig(
            violations.iter().map(ToString::to_string).collect(),
        ));
    }
    let params = config.market_params();
    let variates = SeededStreams::new(config.seed);
    let (mut state, initial) = MarketState::initialize(scenario, &params, config.initial_quantity);
    observe(&initial);
    for _ in 0..config.horizon {
        let record = state.advance(&params, &variates);
        observe(&record);
    }
    Ok(state)
}

pub fn run(config: &MarketConfig, scenario: &ScenarioSpec) -> Result<RunArtifact> {
    let mut initial = None;
    let mut records = Vec::with_capacity(config.horizon as usize);
    run_streaming(config, scenario, |r| {
        if initial.is_none() {
            initial = Some(r.clone());
        } else {
            records.push(r.clone());
        }
    })?;
    let initial = initial.expect("round 0 is always observed");
    let summary = if records.is_empty() {
        summarize(std::slice::from_ref(&initial), scenario)?
    } else {
        summarize(&records, scenario)?
    };
    Ok(RunArtifact {
        config: config.clone(),
        initial,
        records,
        summary,
    })
}
