//! Experiment configuration: run parameters plus the private utilities of
//! every agent.
//!
//! Utilities are sampled so that the supplier optima and the consumer optima
//! each add up to the same target, which is what lets total supply and total
//! demand meet when every agent sits at its own optimum.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Role, RoleParams};
use crate::error::{MarketError, Result};
use crate::market::{MarketParams, SignalSemantics};
use crate::utility::Utility;

const SUM_RTOL: f64 = 1e-6;
const WEIGHT_RANGE: (f64, f64) = (0.5, 1.5);

/// Additive step and back-off factor for one side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AimdParams {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub num_suppliers: usize,
    pub num_consumers: usize,
    pub supplier_params: AimdParams,
    pub consumer_params: AimdParams,
    pub gamma: f64,
    pub horizon: u64,
    pub seed: u64,
    pub initial_quantity: f64,
    #[serde(default)]
    pub signal_semantics: SignalSemantics,
}

impl MarketConfig {
    pub fn role_params(&self, role: Role) -> RoleParams {
        let p = match role {
            Role::Supplier => self.supplier_params,
            Role::Consumer => self.consumer_params,
        };
        RoleParams {
            alpha: p.alpha,
            beta: p.beta,
            gamma: self.gamma,
        }
    }

    pub fn market_params(&self) -> MarketParams {
        MarketParams {
            supplier: self.role_params(Role::Supplier),
            consumer: self.role_params(Role::Consumer),
            semantics: self.signal_semantics,
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.num_suppliers == 0 {
            out.push(Violation::Config("num_suppliers must be >= 1".into()));
        }
        if self.num_consumers == 0 {
            out.push(Violation::Config("num_consumers must be >= 1".into()));
        }
        if !(self.initial_quantity.is_finite() && self.initial_quantity >= 0.0) {
            out.push(Violation::Config(format!(
                "initial_quantity must be >= 0, got {}",
                self.initial_quantity
            )));
        }
        for (role, p) in [
            (Role::Supplier, self.supplier_params),
            (Role::Consumer, self.consumer_params),
        ] {
            if !(p.alpha.is_finite() && p.alpha > 0.0) {
                out.push(Violation::Config(format!("{role} alpha must be > 0, got {}", p.alpha)));
            }
            if !(p.beta > 0.0 && p.beta < 1.0) {
                out.push(Violation::Config(format!("{role} beta must be in (0, 1), got {}", p.beta)));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            out.push(Violation::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioMode {
    /// Both sides hold quadratic utilities with finite optima.
    BothConcave,
    /// Suppliers hold `scale * sqrt(z)`; consumers stay quadratic.
    MonotoneSuppliers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub target_sum: f64,
    pub mode: ScenarioMode,
    pub supplier_utilities: Vec<Utility>,
    pub consumer_utilities: Vec<Utility>,
}

impl ScenarioSpec {
    pub fn utilities(&self, role: Role) -> &[Utility] {
        match role {
            Role::Supplier => &self.supplier_utilities,
            Role::Consumer => &self.consumer_utilities,
        }
    }

    /// Sum of per-agent optima on one side, or `None` if any agent lacks one.
    pub fn optimum_sum(&self, role: Role) -> Option<f64> {
        self.utilities(role).iter().map(Utility::argmax).sum()
    }

    /// Sum of per-agent maximum utility values on one side, or `None` if any
    /// agent's utility is unbounded.
    pub fn max_utility_sum(&self, role: Role) -> Option<f64> {
        self.utilities(role).iter().map(Utility::max_value).sum()
    }
}

/// Sampling ranges for [`generate_scenario`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    /// Quadratic curvature is drawn uniformly from this range.
    pub curvature_range: (f64, f64),
    /// Square-root scale is drawn uniformly from this range.
    pub scale_range: (f64, f64),
    /// Rescale curvatures so each quadratic side's maximum utility values also
    /// sum to the target.
    pub couple_utility_sum: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            curvature_range: (5.0, 30.0),
            scale_range: (1.0, 10.0),
            couple_utility_sum: false,
        }
    }
}

/// Samples private utilities for `config.num_suppliers` suppliers and
/// `config.num_consumers` consumers.
///
/// Optima are `target_sum * w_k / sum(w)` with weights uniform on
/// [0.5, 1.5), so each quadratic side sums to `target_sum`. Draw order:
/// supplier weights (quadratic suppliers only), consumer weights, supplier
/// curvatures or scales, consumer curvatures.
pub fn generate_scenario(
    config: &MarketConfig,
    mode: ScenarioMode,
    target_sum: f64,
    seed: u64,
    params: &GeneratorParams,
) -> Result<ScenarioSpec> {
    let mut problems = Vec::new();
    if !(target_sum.is_finite() && target_sum > 0.0) {
        problems.push(format!("target_sum must be > 0, got {target_sum}"));
    }
    for (name, (lo, hi)) in [
        ("curvature_range", params.curvature_range),
        ("scale_range", params.scale_range),
    ] {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            problems.push(format!("{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
        }
    }
    if config.num_suppliers == 0 || config.num_consumers == 0 {
        problems.push("agent counts must be >= 1".into());
    }
    if !problems.is_empty() {
        return Err(MarketError::InvalidConfig(problems));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = config.num_suppliers;
    let c = config.num_consumers;

    let supplier_optima = match mode {
        ScenarioMode::BothConcave => Some(normalized_optima(&mut rng, s, target_sum)),
        ScenarioMode::MonotoneSuppliers => None,
    };
    let consumer_optima = normalized_optima(&mut rng, c, target_sum);

    let supplier_utilities = match supplier_optima {
        Some(optima) => quadratic_side(&mut rng, &optima, params, target_sum),
        None => (0..s)
            .map(|_| Utility::SqrtMonotone {
                scale: uniform(&mut rng, params.scale_range),
            })
            .collect(),
    };
    let consumer_utilities = quadratic_side(&mut rng, &consumer_optima, params, target_sum);

    Ok(ScenarioSpec {
        target_sum,
        mode,
        supplier_utilities,
        consumer_utilities,
    })
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn normalized_optima(rng: &mut ChaCha8Rng, n: usize, target: f64) -> Vec<f64> {
    let weights: Vec<f64> = (0..n).map(|_| uniform(rng, WEIGHT_RANGE)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| target * (w / total)).collect()
}

fn quadratic_side(
    rng: &mut ChaCha8Rng,
    optima: &[f64],
    params: &GeneratorParams,
    target: f64,
) -> Vec<Utility> {
    let mut curvatures: Vec<f64> = optima
        .iter()
        .map(|_| uniform(rng, params.curvature_range))
        .collect();
    if params.couple_utility_sum {
        let total: f64 = curvatures.iter().sum();
        let factor = target / (1.5 * total);
        curvatures.iter_mut().for_each(|h| *h *= factor);
    }
    optima
        .iter()
        .zip(curvatures)
        .map(|(&optimum, curvature)| Utility::Quadratic { optimum, curvature })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Config(String),
    Length {
        role: Role,
        expected: usize,
        actual: usize,
    },
    SumConstraint {
        role: Role,
        expected: f64,
        actual: f64,
    },
    WrongKind {
        role: Role,
        index: usize,
        expected: &'static str,
    },
    Utility {
        role: Role,
        index: usize,
        message: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Config(msg) => write!(f, "config: {msg}"),
            Violation::Length {
                role,
                expected,
                actual,
            } => write!(f, "{role} utilities: expected {expected}, found {actual}"),
            Violation::SumConstraint {
                role,
                expected,
                actual,
            } => write!(f, "{role} optima sum to {actual}, expected {expected}"),
            Violation::WrongKind {
                role,
                index,
                expected,
            } => write!(f, "{role} utility {index}: expected {expected}"),
            Violation::Utility {
                role,
                index,
                message,
            } => write!(f, "{role} utility {index}: {message}"),
        }
    }
}

/// Lists every way `spec` and `config` fail to describe a runnable
/// experiment. Empty means valid.
pub fn validate_scenario(spec: &ScenarioSpec, config: &MarketConfig) -> Vec<Violation> {
    let mut out = config.violations();
    if !(spec.target_sum.is_finite() && spec.target_sum > 0.0) {
        out.push(Violation::Config(format!(
            "target_sum must be > 0, got {}",
            spec.target_sum
        )));
    }

    for (role, expected) in [
        (Role::Supplier, config.num_suppliers),
        (Role::Consumer, config.num_consumers),
    ] {
        let utilities = spec.utilities(role);
        if utilities.len() != expected {
            out.push(Violation::Length {
                role,
                expected,
                actual: utilities.len(),
            });
        }

        let want_monotone = role == Role::Supplier && spec.mode == ScenarioMode::MonotoneSuppliers;
        let mut kinds_ok = true;
        for (index, u) in utilities.iter().enumerate() {
            if let Err(e) = u.validate() {
                out.push(Violation::Utility {
                    role,
                    index,
                    message: e.to_string(),
                });
            }
            let is_monotone = matches!(u, Utility::SqrtMonotone { .. });
            if is_monotone != want_monotone {
                kinds_ok = false;
                out.push(Violation::WrongKind {
                    role,
                    index,
                    expected: if want_monotone { "SqrtMonotone" } else { "Quadratic" },
                });
            }
        }

        if !want_monotone && kinds_ok {
            if let Some(actual) = spec.optimum_sum(role) {
                let expected = spec.target_sum;
                if (actual - expected).abs() > SUM_RTOL * expected.abs() {
                    out.push(Violation::SumConstraint {
                        role,
                        expected,
                        actual,
                    });
                }
            }
        }
    }
    out
}

/// Generator settings as stored in an experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub mode: ScenarioMode,
    pub target_sum: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub params: GeneratorParams,
}

/// On-disk experiment: run parameters plus either an explicit scenario or the
/// settings to sample one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub config: MarketConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

impl ExperimentFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| MarketError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            MarketError::Format { message, .. } => MarketError::format(path, message),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| MarketError::format("<toml>", e.message()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment files are always representable in TOML")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| MarketError::io(path, e))
    }

    /// Produces the scenario, sampling it if the file only carries generator
    /// settings.
    pub fn resolve(&self) -> Result<ScenarioSpec> {
        match (&self.scenario, &self.generator) {
            (Some(s), None) => Ok(s.clone()),
            (None, Some(g)) => generate_scenario(&self.config, g.mode, g.target_sum, g.seed, &g.params),
            (Some(_), Some(_)) => Err(MarketError::InvalidConfig(vec![
                "give either [scenario] or [generator], not both".into(),
            ])),
            (None, None) => Err(MarketError::InvalidConfig(vec![
                "missing [scenario] or [generator] section".into(),
            ])),
        }
    }
}

/// A named, fully specified experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceExperiment {
    pub name: &'static str,
    pub config: MarketConfig,
    pub scenario: ScenarioSpec,
    pub generator: GeneratorSpec,
}

impl ReferenceExperiment {
    pub fn into_parts(self) -> (MarketConfig, ScenarioSpec) {
        (self.config, self.scenario)
    }

    /// Explicit-scenario experiment file for this reference.
    pub fn to_file(&self) -> ExperimentFile {
        ExperimentFile {
            config: self.config.clone(),
            generator: None,
            scenario: Some(self.scenario.clone()),
        }
    }
}

pub const REFERENCE_SEED: u64 = 42;
pub const REFERENCE_TARGET: f64 = 900.0;

/// The two reference experiments: 9 suppliers, 18 consumers, alpha 5,
/// beta 0.75, gamma 2, target 900, 5000 rounds, seed 42.
///
/// * `paper-a`: quadratic utilities on both sides, curvatures coupled so each
///   side's maximum utilities also sum to 900. Agents start from zero.
/// * `paper-b`: square-root suppliers. Scales are drawn from [700, 900], which
///   puts the back-off probability at the per-supplier share of the target
///   (100) between 0.7 and 0.9. Agents start from 50.
pub fn reference_configs() -> Vec<ReferenceExperiment> {
    let base = MarketConfig {
        num_suppliers: 9,
        num_consumers: 18,
        supplier_params: AimdParams {
            alpha: 5.0,
            beta: 0.75,
        },
        consumer_params: AimdParams {
            alpha: 5.0,
            beta: 0.75,
        },
        gamma: 2.0,
        horizon: 5000,
        seed: REFERENCE_SEED,
        initial_quantity: 0.0,
        signal_semantics: SignalSemantics::ExcessSide,
    };

    let make = |name, mode, initial_quantity, params: GeneratorParams| {
        let config = MarketConfig {
            initial_quantity,
            ..base.clone()
        };
        let generator = GeneratorSpec {
            mode,
            target_sum: REFERENCE_TARGET,
            seed: REFERENCE_SEED,
            params,
        };
        let scenario = generate_scenario(&config, mode, REFERENCE_TARGET, REFERENCE_SEED, &params)
            .expect("reference generator settings are valid");
        ReferenceExperiment {
            name,
            config,
            scenario,
            generator,
        }
    };

    vec![
        make(
            "paper-a",
            ScenarioMode::BothConcave,
            0.0,
            GeneratorParams {
                couple_utility_sum: true,
                ..GeneratorParams::default()
            },
        ),
        make(
            "paper-b",
            ScenarioMode::MonotoneSuppliers,
            50.0,
            GeneratorParams {
                scale_range: (700.0, 900.0),
                couple_utility_sum: true,
                ..GeneratorParams::default()
            },
        ),
    ]
}

pub fn reference_config(name: &str) -> Option<ReferenceExperiment> {
    reference_configs().into_iter().find(|r| r.name == name)
}
