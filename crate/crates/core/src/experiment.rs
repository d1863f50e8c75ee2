//! Replicated runs over consecutive seeds, reduced to per-round scalar
//! series and confidence bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::Role;
use crate::error::Result;
use crate::market::run;
use crate::metrics::{confidence_band, BandSeries, RoundRecord, RunSummary};
use crate::scenario::{MarketConfig, ScenarioSpec};

/// Scalar series tracked per replicate, indexed by round (round 0 included).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    MeanSupplierDerivative,
    MeanConsumerDerivative,
    TotalSupply,
    TotalConsumption,
    SumOfUtilities,
}

impl Series {
    pub const ALL: [Series; 5] = [
        Series::MeanSupplierDerivative,
        Series::MeanConsumerDerivative,
        Series::TotalSupply,
        Series::TotalConsumption,
        Series::SumOfUtilities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Series::MeanSupplierDerivative => "mean_supplier_derivative",
            Series::MeanConsumerDerivative => "mean_consumer_derivative",
            Series::TotalSupply => "total_supply",
            Series::TotalConsumption => "total_consumption",
            Series::SumOfUtilities => "sum_of_utilities",
        }
    }

    pub fn extract(self, r: &RoundRecord) -> f64 {
        match self {
            Series::MeanSupplierDerivative => r.mean_derivative(Some(Role::Supplier), false),
            Series::MeanConsumerDerivative => r.mean_derivative(Some(Role::Consumer), false),
            Series::TotalSupply => r.total_supply,
            Series::TotalConsumption => r.total_consumption,
            Series::SumOfUtilities => r.sum_of_utilities,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRun {
    pub seed: u64,
    pub summary: RunSummary,
    /// One vector per entry of [`Series::ALL`].
    pub series: Vec<Vec<f64>>,
}

impl ReplicateRun {
    pub fn series(&self, s: Series) -> &[f64] {
        let i = Series::ALL.iter().position(|x| *x == s).expect("listed in ALL");
        &self.series[i]
    }
}

/// Seeds `base, base + 1, ..., base + count - 1`.
pub fn replicate_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| base.wrapping_add(k)).collect()
}

/// Runs one replicate per seed (in parallel) against a fixed scenario.
/// Output order follows `seeds`.
pub fn run_replicates(
    config: &MarketConfig,
    scenario: &ScenarioSpec,
    seeds: &[u64],
) -> Result<Vec<ReplicateRun>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = MarketConfig {
                seed,
                ..config.clone()
            };
            let art = run(&cfg, scenario)?;
            let all = || std::iter::once(&art.initial).chain(&art.records);
            let series = Series::ALL
                .iter()
                .map(|s| all().map(|r| s.extract(r)).collect())
                .collect();
            Ok(ReplicateRun {
                seed,
                summary: art.summary,
                series,
            })
        })
        .collect()
}

pub fn band(runs: &[ReplicateRun], series: Series, level: f64) -> Result<BandSeries> {
    let reps: Vec<Vec<f64>> = runs.iter().map(|r| r.series(series).to_vec()).collect();
    confidence_band(&reps, level)
}
