//! Command-line front end: single runs, seed replicates, the two reference
//! experiments, and config validation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use aimd_market::{
    band, export_band, export_run, reference_config, replicate_seeds, run, run_replicates,
    validate_scenario, ExperimentFile, ExportFormat, MarketConfig, MarketError, ScenarioSpec,
    Series, SignalSemantics,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "aimd-market", version, about = "AIMD supply/demand balancing simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seeded experiment and export its trajectory and summary.
    Run(RunArgs),
    /// Run consecutive seeds and write confidence bands.
    Replicate(ReplicateArgs),
    /// Run the reference experiment with quadratic suppliers and consumers.
    PaperA(ReferenceArgs),
    /// Run the reference experiment with square-root suppliers.
    PaperB(ReferenceArgs),
    /// Check an experiment file and list every violation.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct Source {
    /// Experiment file (TOML).
    #[arg(long, conflicts_with = "reference")]
    pub config: Option<PathBuf>,
    /// Built-in experiment: paper-a or paper-b.
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "alpha-s")]
    pub alpha_s: Option<f64>,
    #[arg(long = "beta-s")]
    pub beta_s: Option<f64>,
    #[arg(long = "alpha-c")]
    pub alpha_c: Option<f64>,
    #[arg(long = "beta-c")]
    pub beta_c: Option<f64>,
    #[arg(long = "initial-quantity")]
    pub initial_quantity: Option<f64>,
    /// Signal the side in shortfall instead of the side in excess.
    #[arg(long = "flip-signal-semantics")]
    pub flip_signal_semantics: bool,
}

impl Overrides {
    pub fn apply(&self, config: &mut MarketConfig) {
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.horizon {
            config.horizon = v;
        }
        if let Some(v) = self.gamma {
            config.gamma = v;
        }
        if let Some(v) = self.alpha_s {
            config.supplier_params.alpha = v;
        }
        if let Some(v) = self.beta_s {
            config.supplier_params.beta = v;
        }
        if let Some(v) = self.alpha_c {
            config.consumer_params.alpha = v;
        }
        if let Some(v) = self.beta_c {
            config.consumer_params.beta = v;
        }
        if let Some(v) = self.initial_quantity {
            config.initial_quantity = v;
        }
        if self.flip_signal_semantics {
            config.signal_semantics = SignalSemantics::Inverted;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
pub struct Output {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    /// Confidence level of the bands.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    InvalidConfig,
    Io,
}

/// Failure reported to the user as one JSON line on stderr.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            error: ErrorKind::Usage,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.error {
            ErrorKind::Io => 1,
            ErrorKind::Usage | ErrorKind::InvalidConfig => 2,
        }
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("plain strings serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::InvalidConfig(violations) => CliError {
                error: ErrorKind::InvalidConfig,
                message: "invalid configuration".into(),
                violations,
            },
            MarketError::Format { .. } => CliError {
                error: ErrorKind::InvalidConfig,
                message: e.to_string(),
                violations: Vec::new(),
            },
            other => CliError {
                error: ErrorKind::Io,
                message: other.to_string(),
                violations: Vec::new(),
            },
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        error: ErrorKind::Io,
        message: format!("{}: {e}", path.display()),
        violations: Vec::new(),
    }
}

/// Loads the experiment, applies overrides, and checks it.
fn load(source: &Source, overrides: &Overrides) -> Result<(MarketConfig, ScenarioSpec), CliError> {
    let (mut config, scenario) = match (&source.config, &source.reference) {
        (Some(path), None) => {
            let file = ExperimentFile::load(path)?;
            let scenario = file.resolve()?;
            (file.config, scenario)
        }
        (None, Some(name)) => load_reference(name)?,
        _ => return Err(CliError::usage("give --config <path> or --reference <name>")),
    };
    overrides.apply(&mut config);
    check(&config, &scenario)?;
    Ok((config, scenario))
}

fn load_reference(name: &str) -> Result<(MarketConfig, ScenarioSpec), CliError> {
    reference_config(name)
        .map(|r| r.into_parts())
        .ok_or_else(|| CliError::usage(format!("unknown reference experiment {name:?}")))
}

fn check(config: &MarketConfig, scenario: &ScenarioSpec) -> Result<(), CliError> {
    let violations = validate_scenario(scenario, config);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(MarketError::InvalidConfig(violations.iter().map(ToString::to_string).collect()).into())
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("summaries serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

fn save_experiment(dir: &Path, config: &MarketConfig, scenario: &ScenarioSpec) -> Result<(), CliError> {
    let file = ExperimentFile {
        config: config.clone(),
        generator: None,
        scenario: Some(scenario.clone()),
    };
    Ok(file.save(dir.join("experiment.toml"))?)
}

fn execute_run(
    config: &MarketConfig,
    scenario: &ScenarioSpec,
    output: &Output,
) -> Result<String, CliError> {
    let artifact = run(config, scenario)?;
    prepare_dir(&output.out)?;
    let format = ExportFormat::from(output.format);
    let run_path = output.out.join(format!("run.{}", format.extension()));
    export_run(
        std::iter::once(&artifact.initial).chain(&artifact.records),
        format,
        &run_path,
    )?;
    write_json(&output.out.join("summary.json"), &artifact.summary)?;
    save_experiment(&output.out, config, scenario)?;

    let s = &artifact.summary;
    Ok(format!(
        "rounds={} seed={} window={} mean_supply={:.3} mean_consumption={:.3} \
         supplier_utility={:.3} consumer_utility={:.3} mean_abs_derivative={:.5} -> {}",
        s.last_round,
        config.seed,
        s.window,
        s.window_mean_total_supply,
        s.window_mean_total_consumption,
        s.final_supplier_utility_sum,
        s.final_consumer_utility_sum,
        s.final_mean_abs_derivative,
        output.out.display()
    ))
}

#[derive(Serialize)]
struct ReplicateMetadata<'a> {
    base_seed: u64,
    seeds: &'a [u64],
    replicate_count: usize,
    level: f64,
    series: Vec<&'static str>,
}

fn execute_replicate(args: &ReplicateArgs) -> Result<String, CliError> {
    let (config, scenario) = load(&args.source, &args.overrides)?;
    if args.replicates < 2 {
        return Err(MarketError::TooFewReplicates {
            needed: 2,
            got: args.replicates,
        }
        .into());
    }
    let seeds = replicate_seeds(config.seed, args.replicates);
    let runs = run_replicates(&config, &scenario, &seeds)?;

    let out = &args.output.out;
    prepare_dir(out)?;
    let format = ExportFormat::from(args.output.format);
    for (k, r) in runs.iter().enumerate() {
        write_json(&out.join(format!("replicate_{k:03}_summary.json")), &r.summary)?;
    }
    for s in Series::ALL {
        let b = band(&runs, s, args.level)?;
        export_band(&b, format, out.join(format!("band_{}.{}", s.name(), format.extension())))?;
    }
    write_json(
        &out.join("replicates.json"),
        &ReplicateMetadata {
            base_seed: config.seed,
            seeds: &seeds,
            replicate_count: seeds.len(),
            level: args.level,
            series: Series::ALL.iter().map(|s| s.name()).collect(),
        },
    )?;
    save_experiment(out, &config, &scenario)?;
    Ok(format!(
        "replicates={} seeds={}..={} -> {}",
        seeds.len(),
        seeds[0],
        seeds[seeds.len() - 1],
        out.display()
    ))
}

fn execute_validate(args: &ValidateArgs) -> Result<String, CliError> {
    let file = ExperimentFile::load(&args.config)?;
    let scenario = file.resolve()?;
    let mut config = file.config;
    args.overrides.apply(&mut config);
    check(&config, &scenario)?;
    Ok(format!("{}: ok", args.config.display()))
}

/// Executes one invocation and returns the line to print on success.
pub fn run_command(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(args) => {
            let (config, scenario) = load(&args.source, &args.overrides)?;
            execute_run(&config, &scenario, &args.output)
        }
        Command::Replicate(args) => execute_replicate(args),
        Command::PaperA(args) | Command::PaperB(args) => {
            let name = match cli.command {
                Command::PaperA(_) => "paper-a",
                _ => "paper-b",
            };
            let (mut config, scenario) = load_reference(name)?;
            args.overrides.apply(&mut config);
            check(&config, &scenario)?;
            execute_run(&config, &scenario, &args.output)
        }
        Command::Validate(args) => execute_validate(args),
    }
}
