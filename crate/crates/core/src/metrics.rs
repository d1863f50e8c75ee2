//! Per-round records, summaries, confidence bands and file export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::agent::{AgentId, AgentState, AgentStepTrace, Role};
use crate::error::{MarketError, Result};
use crate::market::CapacitySignals;
use crate::scenario::ScenarioSpec;

/// Header of the per-agent CSV export.
pub const RUN_CSV_HEADER: [&str; 15] = [
    "round",
    "agent_id",
    "role",
    "quantity",
    "running_average",
    "utility_value",
    "utility_derivative",
    "lambda",
    "bernoulli",
    "branch",
    "total_supply",
    "total_consumption",
    "s_signal",
    "c_signal",
    "sum_of_utilities",
];

pub const BAND_CSV_HEADER: [&str; 5] = ["round", "mean", "lower", "upper", "replicate_count"];

/// Floor used when a convergence target is zero.
const TARGET_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub agent_id: AgentId,
    pub role: Role,
    pub quantity: f64,
    pub running_average: f64,
    /// Utility at the running average.
    pub utility_value: f64,
    /// Derivative at the running average; `None` where it is unbounded.
    pub utility_derivative: Option<f64>,
    pub trace: AgentStepTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub per_agent: Vec<AgentRecord>,
    pub total_supply: f64,
    pub total_consumption: f64,
    pub signals: CapacitySignals,
    pub sum_of_utilities: f64,
}

impl RoundRecord {
    pub fn capture<'a>(
        round: u64,
        agents: impl IntoIterator<Item = (&'a AgentState, &'a AgentStepTrace)>,
        signals: CapacitySignals,
    ) -> Self {
        let per_agent: Vec<AgentRecord> = agents
            .into_iter()
            .map(|(a, trace)| AgentRecord {
                agent_id: a.id,
                role: a.role,
                quantity: a.quantity,
                running_average: a.running_average,
                utility_value: a
                    .utility
                    .evaluate(a.running_average)
                    .expect("running averages are nonnegative"),
                utility_derivative: a.utility.derivative(a.running_average).ok(),
                trace: *trace,
            })
            .collect();
        let mut record = RoundRecord {
            round,
            per_agent,
            total_supply: 0.0,
            total_consumption: 0.0,
            signals,
            sum_of_utilities: 0.0,
        };
        (record.total_supply, record.total_consumption) = record.recomputed_totals();
        record.sum_of_utilities = record.per_agent.iter().map(|a| a.utility_value).sum();
        record
    }

    /// Totals summed from `per_agent` in stored order.
    pub fn recomputed_totals(&self) -> (f64, f64) {
        let mut supply = 0.0;
        let mut consumption = 0.0;
        for a in &self.per_agent {
            match a.role {
                Role::Supplier => supply += a.quantity,
                Role::Consumer => consumption += a.quantity,
            }
        }
        (supply, consumption)
    }

    pub fn agents(&self, role: Role) -> impl Iterator<Item = &AgentRecord> {
        self.per_agent.iter().filter(move |a| a.role == role)
    }

    pub fn utility_sum(&self, role: Role) -> f64 {
        self.agents(role).map(|a| a.utility_value).sum()
    }

    pub fn total_running_average(&self, role: Role) -> f64 {
        self.agents(role).map(|a| a.running_average).sum()
    }

    /// Mean derivative over agents of `role` (all agents when `None`),
    /// skipping unbounded ones. `abs` averages magnitudes instead.
    pub fn mean_derivative(&self, role: Option<Role>, abs: bool) -> f64 {
        let (sum, n) = self
            .per_agent
            .iter()
            .filter(|a| role.is_none_or(|r| a.role == r))
            .filter_map(|a| a.utility_derivative)
            .fold((0.0, 0usize), |(s, n), d| (s + if abs { d.abs() } else { d }, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Earliest index `r` such that `series[r..r + window]` all lie within
/// `rel_tol * max(target, 1e-9)` of `target`.
pub fn detect_convergence(series: &[f64], target: f64, rel_tol: f64, window: usize) -> Option<usize> {
    if window == 0 || !(rel_tol > 0.0) {
        return None;
    }
    let band = rel_tol * target.abs().max(TARGET_FLOOR);
    let mut run = 0usize;
    for (t, v) in series.iter().enumerate() {
        if (v - target).abs() <= band {
            run += 1;
            if run == window {
                return Some(t + 1 - window);
            }
        } else {
            run = 0;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub round: u64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicate_count: usize,
}

impl BandPoint {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub type BandSeries = Vec<BandPoint>;

/// Normal-approximation confidence band across replicates.
///
/// `replicates[k][t]` is replicate `k` at round `t`. Half-width is
/// `z * s / sqrt(R)` with `s` the sample standard deviation (n - 1) and `z`
/// the two-sided normal quantile for `level`.
pub fn confidence_band(replicates: &[Vec<f64>], level: f64) -> Result<BandSeries> {
    let r = replicates.len();
    if r < 2 {
        return Err(MarketError::TooFewReplicates { needed: 2, got: r });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MarketError::InvalidConfig(vec![format!(
            "confidence level must be in (0, 1), got {level}"
        )]));
    }
    let len = replicates[0].len();
    if let Some((index, rep)) = replicates.iter().enumerate().find(|(_, s)| s.len() != len) {
        return Err(MarketError::RaggedReplicates {
            index,
            len: rep.len(),
            expected: len,
        });
    }

    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let n = r as f64;
    Ok((0..len)
        .map(|t| {
            let mean = replicates.iter().map(|s| s[t]).sum::<f64>() / n;
            let var = replicates.iter().map(|s| (s[t] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let half = z * var.sqrt() / n.sqrt();
            BandPoint {
                round: t as u64,
                mean,
                lower: mean - half,
                upper: mean + half,
                replicate_count: r,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| MarketError::io(path, e))
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_run_csv<'a, W: Write>(
    records: impl IntoIterator<Item = &'a RoundRecord>,
    w: W,
) -> csv::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(RUN_CSV_HEADER)?;
    for r in records {
        let round = r.round.to_string();
        let total_supply = r.total_supply.to_string();
        let total_consumption = r.total_consumption.to_string();
        let sum = r.sum_of_utilities.to_string();
        for a in &r.per_agent {
            out.write_record([
                round.as_str(),
                &a.agent_id.to_string(),
                a.role.as_str(),
                &a.quantity.to_string(),
                &a.running_average.to_string(),
                &a.utility_value.to_string(),
                &a.utility_derivative.map(|d| d.to_string()).unwrap_or_default(),
                &a.trace.lambda.to_string(),
                bit(a.trace.bernoulli),
                a.trace.branch.as_str(),
                &total_supply,
                &total_consumption,
                bit(r.signals.supplier_signal),
                bit(r.signals.consumer_signal),
                &sum,
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `records` to `path` as CSV (one row per agent per round) or as a
/// JSON array of round records.
pub fn export_run<'a>(
    records: impl IntoIterator<Item = &'a RoundRecord>,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    match format {
        ExportFormat::Csv => write_run_csv(records, &mut w).map_err(|e| MarketError::format(path, e))?,
        ExportFormat::Json => {
            let records: Vec<&RoundRecord> = records.into_iter().collect();
            serde_json::to_writer(&mut w, &records).map_err(|e| MarketError::format(path, e))?;
            w.write_all(b"\n").map_err(|e| MarketError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| MarketError::io(path, e))
}

pub fn import_run_json(path: impl AsRef<Path>) -> Result<Vec<RoundRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MarketError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| MarketError::format(path, e))
}

pub fn export_band(band: &[BandPoint], format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    match format {
        ExportFormat::Csv => {
            let mut out = csv_writer(&mut w);
            let write = |out: &mut csv::Writer<_>| -> csv::Result<()> {
                out.write_record(BAND_CSV_HEADER)?;
                for p in band {
                    out.write_record([
                        p.round.to_string(),
                        p.mean.to_string(),
                        p.lower.to_string(),
                        p.upper.to_string(),
                        p.replicate_count.to_string(),
                    ])?;
                }
                out.flush()?;
                Ok(())
            };
            write(&mut out).map_err(|e| MarketError::format(path, e))?;
        }
        ExportFormat::Json => {
            serde_json::to_writer(&mut w, band).map_err(|e| MarketError::format(path, e))?;
            w.write_all(b"\n").map_err(|e| MarketError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| MarketError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent_id: AgentId,
    pub role: Role,
    pub final_running_average: f64,
    pub optimum: Option<f64>,
    pub distance_to_optimum: Option<f64>,
    pub relative_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Number of records summarized.
    pub rounds: usize,
    pub last_round: u64,
    /// Length of the trailing window behind the `window_mean_*` fields.
    pub window: usize,
    pub window_mean_total_supply: f64,
    pub window_mean_total_consumption: f64,
    pub final_total_supply: f64,
    pub final_total_consumption: f64,
    pub final_sum_of_utilities: f64,
    pub final_supplier_utility_sum: f64,
    pub final_consumer_utility_sum: f64,
    pub final_mean_abs_derivative: f64,
    pub target_sum: f64,
    pub max_supplier_utility_sum: Option<f64>,
    pub max_consumer_utility_sum: Option<f64>,
    pub agents: Vec<AgentSummary>,
}

impl RunSummary {
    pub fn agent(&self, id: AgentId) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.agent_id == id)
    }

    pub fn max_relative_distance(&self, role: Option<Role>) -> Option<f64> {
        self.agents
            .iter()
            .filter(|a| role.is_none_or(|r| a.role == r))
            .filter_map(|a| a.relative_distance)
            .reduce(f64::max)
    }
}

/// Trailing window: 10% of the run, at least 100 rounds, never more than the
/// run itself.
pub fn trailing_window(rounds: usize) -> usize {
    (rounds / 10).max(100).min(rounds)
}

pub fn summarize(records: &[RoundRecord], scenario: &ScenarioSpec) -> Result<RunSummary> {
    let last = records.last().ok_or(MarketError::EmptyRun)?;
    let window = trailing_window(records.len());
    let tail = &records[records.len() - window..];
    let mean = |f: fn(&RoundRecord) -> f64| tail.iter().map(f).sum::<f64>() / window as f64;

    let agents = last
        .per_agent
        .iter()
        .map(|a| {
            let optimum = scenario
                .utilities(a.role)
                .get(utility_index(a, scenario))
                .and_then(|u| u.argmax());
            let distance = optimum.map(|o| (a.running_average - o).abs());
            AgentSummary {
                agent_id: a.agent_id,
                role: a.role,
                final_running_average: a.running_average,
                optimum,
                distance_to_optimum: distance,
                relative_distance: distance
                    .zip(optimum)
                    .map(|(d, o)| d / o.abs().max(TARGET_FLOOR)),
            }
        })
        .collect();

    Ok(RunSummary {
        rounds: records.len(),
        last_round: last.round,
        window,
        window_mean_total_supply: mean(|r| r.total_supply),
        window_mean_total_consumption: mean(|r| r.total_consumption),
        final_total_supply: last.total_supply,
        final_total_consumption: last.total_consumption,
        final_sum_of_utilities: last.sum_of_utilities,
        final_supplier_utility_sum: last.utility_sum(Role::Supplier),
        final_consumer_utility_sum: last.utility_sum(Role::Consumer),
        final_mean_abs_derivative: last.mean_derivative(None, true),
        target_sum: scenario.target_sum,
        max_supplier_utility_sum: scenario.max_utility_sum(Role::Supplier),
        max_consumer_utility_sum: scenario.max_utility_sum(Role::Consumer),
        agents,
    })
}

/// Suppliers carry ids `0..S` and consumers `S..S+C`.
fn utility_index(a: &AgentRecord, scenario: &ScenarioSpec) -> usize {
    let id = a.agent_id.0 as usize;
    match a.role {
        Role::Supplier => id,
        Role::Consumer => id.saturating_sub(scenario.supplier_utilities.len()),
    }
}
