//! Balancing supply and demand among many independent suppliers and
//! consumers using only one-bit capacity feedback.
//!
//! Every agent holds a private concave utility. Each round the center
//! compares total supply with total consumption and tells the side in excess
//! to back off. Agents answer with an AIMD rule: with a probability set by
//! their marginal utility at their long-term average they shrink their
//! quantity by a factor `beta`; otherwise they step by `alpha` toward their
//! own optimum. No prices, bids, or agent-to-agent messages are involved.
//!
//! ```
//! use aimd_market::{reference_config, run};
//!
//! let (mut config, scenario) = reference_config("paper-a").unwrap().into_parts();
//! config.horizon = 100;
//! let artifact = run(&config, &scenario).unwrap();
//! assert_eq!(artifact.records.len(), 100);
//! ```

pub mod agent;
pub mod error;
pub mod experiment;
pub mod market;
pub mod metrics;
pub mod scenario;
pub mod utility;

pub use agent::{
    backoff_probability, update_running_average, AgentId, AgentState, AgentStepTrace, Branch,
    Role, RoleParams,
};
pub use error::{MarketError, Result, UtilityError};
pub use experiment::{band, replicate_seeds, run_replicates, ReplicateRun, Series};
pub use market::{
    compute_signals, compute_signals_with, run, run_streaming, CapacitySignals, MarketParams,
    MarketState, RunArtifact, SeededStreams, SignalSemantics, VariateSource,
};
pub use metrics::{
    confidence_band, detect_convergence, export_band, export_run, import_run_json, summarize,
    trailing_window, write_run_csv, BAND_CSV_HEADER, RUN_CSV_HEADER,
    AgentRecord, AgentSummary, BandPoint, BandSeries, ExportFormat, RoundRecord, RunSummary,
};
pub use scenario::{
    generate_scenario, reference_config, reference_configs, validate_scenario, AimdParams,
    ExperimentFile, GeneratorParams, GeneratorSpec, MarketConfig, ReferenceExperiment,
    ScenarioMode, ScenarioSpec, Violation,
};
pub use utility::Utility;
