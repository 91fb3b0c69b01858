//! Argument definitions and config-file merging for the `smearing` binary.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use smearing::family::ImageForm;
use smearing::manifest::{now_rfc3339, sha256_file, RunManifest};
use smearing::pricing::OptionKind;
use smearing::propagator::DensityMethod;
use smearing::sim::Model;
use smearing::Error;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "smearing",
    version,
    about = "Smearing distributions: family checks, Post inversion, propagators, Kramers-Moyal coefficients, Monte Carlo and pricing",
    after_help = "Exit codes: 0 pass, 1 check failed, 2 usage or configuration error.\n\
                  Each run writes CSV/JSON artifacts and <command>.manifest.json into --out and prints one JSON summary line."
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GlobalArgs {
    /// Seed for all random draws
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads, 0 for one per core; outputs do not depend on it
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    #[serde(skip)]
    pub out: PathBuf,
    /// JSON object of option values (keys as flag names with '_'); explicit flags win
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Functional-equation residual sweep and complete-monotonicity check of a family file
    CheckFamily(CheckFamilyArgs),
    /// Post inversion of the Laplace image with Richardson extrapolation
    Invert(InvertArgs),
    /// Chapman-Kolmogorov residual of the smeared propagator
    Cke(CkeArgs),
    /// Kramers-Moyal coefficients of the variance process
    Km(KmArgs),
    /// Monte Carlo ensemble of the coupled (x, v) system or its Heston reduction
    Simulate(SimulateArgs),
    /// European option by Fourier density and by Monte Carlo
    Price(PriceArgs),
    /// Re-run a manifest and compare output digests
    Replay(ReplayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckFamily(_) => "check-family",
            Command::Invert(_) => "invert",
            Command::Cke(_) => "cke",
            Command::Km(_) => "km",
            Command::Simulate(_) => "simulate",
            Command::Price(_) => "price",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CheckFamilyArgs {
    /// Family file, e.g. {"family":"gamma","b":1,"c":2} or {"family":"custom","F":"log(1+x)"}
    pub family_file: PathBuf,
    /// Largest accepted |residual|
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Highest finite-difference order in the complete-monotonicity check
    #[arg(long, default_value_t = 6)]
    pub cm_order: usize,
    /// Slack below zero tolerated by the complete-monotonicity check
    #[arg(long, default_value_t = 1e-12)]
    pub cm_tol: f64,
    /// Window lengths for the complete-monotonicity check
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    pub cm_t: Vec<f64>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct InvertArgs {
    /// Gamma family rate b
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Gamma family shape rate c
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    /// Family file used instead of --b/--c
    #[arg(long)]
    pub family: Option<PathBuf>,
    /// Points v at which to invert
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0])]
    pub v: Vec<f64>,
    /// Window length t
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Highest Post order; the ladder is k/8, k/4, k/2, k
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    /// Richardson levels (1 or 2)
    #[arg(long, default_value_t = 1)]
    pub levels: usize,
    /// Largest accepted extrapolation error and error against the closed form
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CkeArgs {
    /// Gamma family rate b
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Gamma family shape rate c
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    /// Interest rate r
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    /// Start time
    #[arg(long, default_value_t = 0.0)]
    pub ta: f64,
    /// Intermediate time
    #[arg(long, default_value_t = 1.0)]
    pub tc: f64,
    /// End time
    #[arg(long, default_value_t = 2.0)]
    pub tb: f64,
    /// Start point x_a
    #[arg(long, default_value_t = 0.0)]
    pub x_a: f64,
    /// Density construction
    #[arg(long, value_enum, default_value_t = MethodArg::Fourier)]
    pub method: MethodArg,
    /// Image form; time-independent is a mixture with memory that breaks the check
    #[arg(long, value_enum, default_value_t = FormArg::Cke)]
    pub form: FormArg,
    /// Grid points (power of two, multiple of 4); 0 picks n from 4096 up until |phi| at Nyquist < 1e-12
    #[arg(long, default_value_t = 0)]
    pub n: usize,
    /// Largest accepted L1 residual
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct KmArgs {
    /// Gamma family rate b
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Gamma family shape rate c
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    /// Variance values
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub v: Vec<f64>,
    /// Times
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub t: Vec<f64>,
    /// Coefficient orders
    #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2])]
    pub n: Vec<u32>,
    /// Window fractions tau/t for the extrapolation in tau
    #[arg(long, value_delimiter = ',', default_values_t = [0.08, 0.04, 0.02, 0.01])]
    pub tau_fractions: Vec<f64>,
    /// Largest accepted relative error against the closed form (absolute, scaled by v_bar/t, where it vanishes)
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Model
    #[arg(long, value_enum, default_value_t = ModelArg::CoupledExact)]
    pub model: ModelArg,
    /// Gamma family rate b
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Gamma family shape rate c
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    /// Interest rate r
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    /// Heston mean-reversion speed
    #[arg(long, default_value_t = 1.0)]
    pub gamma_rev: f64,
    /// Heston volatility of variance
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Initial log price
    #[arg(long, default_value_t = 0.0)]
    pub x0: f64,
    /// Start time; v starts from Gamma(c t0, b t0) unless --v0 is given
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    /// End time
    #[arg(long, default_value_t = 2.0)]
    pub t_end: f64,
    /// Largest time step
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Number of paths
    #[arg(long, default_value_t = 10000)]
    pub n_paths: usize,
    /// Correlation of the two Brownian motions (Euler models)
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Fixed initial variance
    #[arg(long)]
    pub v0: Option<f64>,
    /// Antithetic pairs of paths
    #[arg(long, default_value_t = false)]
    pub antithetic: bool,
    /// Keep every n-th step in the ensemble file (the last step is always kept)
    #[arg(long, default_value_t = 10)]
    pub record_stride: usize,
    /// Gzip the ensemble CSV
    #[arg(long, default_value_t = false)]
    pub gzip: bool,
    /// Exit 1 unless the discounted price is a martingale within --tol standard errors
    #[arg(long, default_value_t = false)]
    pub check: bool,
    /// Martingale band in standard errors
    #[arg(long, default_value_t = 3.0)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PriceArgs {
    /// Strike
    #[arg(long, default_value_t = 1.0)]
    pub strike: f64,
    /// Spot
    #[arg(long, default_value_t = 1.0)]
    pub spot: f64,
    /// Maturity
    #[arg(long = "T", id = "maturity", alias = "maturity", default_value_t = 1.0)]
    pub maturity: f64,
    /// Interest rate r
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    /// Gamma family rate b
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Gamma family shape rate c
    #[arg(long, default_value_t = 2.0)]
    pub c: f64,
    /// Option kind
    #[arg(long, value_enum, default_value_t = KindArg::Call)]
    pub kind: KindArg,
    /// Monte Carlo model
    #[arg(long, value_enum, default_value_t = ModelArg::CoupledExact)]
    pub model: ModelArg,
    /// Monte Carlo start time (sets the initial variance law)
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    /// Monte Carlo time step
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Monte Carlo paths
    #[arg(long, default_value_t = 100_000)]
    pub n_paths: usize,
    /// Antithetic pairs of paths
    #[arg(long, default_value_t = false)]
    pub antithetic: bool,
    /// Agreement band in Monte Carlo standard errors
    #[arg(long, default_value_t = 3.0)]
    pub tol: f64,
}

#[derive(Args, Debug, Clone)]
struct ReplayArgs {
    /// Manifest written by an earlier run
    manifest: PathBuf,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Fourier,
    Quadrature,
}

impl From<MethodArg> for DensityMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fourier => DensityMethod::Fourier,
            MethodArg::Quadrature => DensityMethod::Quadrature,
        }
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormArg {
    Cke,
    TimeIndependent,
}

impl From<FormArg> for ImageForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Cke => ImageForm::Cke,
            FormArg::TimeIndependent => ImageForm::TimeIndependent,
        }
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArg {
    CoupledExact,
    CoupledGamma,
    Heston,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::CoupledExact => Model::CoupledExact,
            ModelArg::CoupledGamma => Model::CoupledGamma,
            ModelArg::Heston => Model::Heston,
        }
    }
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Call,
    Put,
}

impl From<KindArg> for OptionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Call => OptionKind::Call,
            KindArg::Put => OptionKind::Put,
        }
    }
}

/// What a command hands back: the summary and whether its check passed.
pub struct Outcome {
    pub summary: Value,
    pub pass: bool,
}

/// Files written by a command, relative to the output directory.
pub struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        }
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn exit(self) -> ExitCode {
        let (msg, code) = match self {
            Failure::Usage(m) => (m, EXIT_USAGE),
            Failure::Run(e) => {
                let code = match e {
                    Error::InvalidArgument(_)
                    | Error::Config(_)
                    | Error::Parse { .. }
                    | Error::Domain(_)
                    | Error::Degenerate(_)
                    | Error::Io(_)
                    | Error::Json(_) => EXIT_USAGE,
                    _ => EXIT_CHECK_FAIL,
                };
                (e.to_string(), code)
            }
        };
        eprintln!("error: {msg}");
        ExitCode::from(code)
    }
}

pub fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli, &matches) {
        Ok(code) => code,
        Err(f) => f.exit(),
    }
}

fn run(cli: Cli, matches: &ArgMatches) -> Result<ExitCode, Failure> {
    let name = cli.command.name();
    let out = cli.global.out.clone();
    if let Command::Replay(r) = &cli.command {
        return replay(&r.manifest, &out);
    }
    let file_config = match &cli.global.config {
        Some(p) => load_config(p)?,
        None => Map::new(),
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let mut resolved = merge(&cli.global, matches, &file_config)?;
    let args = match &cli.command {
        Command::CheckFamily(a) => merge(a, sub, &file_config)?,
        Command::Invert(a) => merge(a, sub, &file_config)?,
        Command::Cke(a) => merge(a, sub, &file_config)?,
        Command::Km(a) => merge(a, sub, &file_config)?,
        Command::Simulate(a) => merge(a, sub, &file_config)?,
        Command::Price(a) => merge(a, sub, &file_config)?,
        Command::Replay(_) => unreachable!(),
    };
    resolved.extend(args);
    if let Some(k) = file_config.keys().find(|k| !resolved.contains_key(*k)) {
        return Err(Failure::Usage(format!("unknown key '{k}' in config file for {name}")));
    }
    let (_, pass) = execute(name, Value::Object(resolved), &out)?;
    Ok(ExitCode::from(if pass { EXIT_PASS } else { EXIT_CHECK_FAIL }))
}

fn load_config(path: &Path) -> Result<Map<String, Value>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m.into_iter().map(|(k, v)| (k.replace('-', "_"), v)).collect()),
        Ok(_) => Err(Failure::Usage(format!("{}: expected a JSON object", path.display()))),
        Err(e) => Err(Failure::Usage(format!("{}: {e}", path.display()))),
    }
}

/// Parsed arguments with config-file values substituted for every field not
/// given explicitly on the command line.
fn merge<T: Serialize + DeserializeOwned>(
    args: &T,
    matches: &ArgMatches,
    file_config: &Map<String, Value>,
) -> Result<Map<String, Value>, Failure> {
    let Value::Object(mut fields) = serde_json::to_value(args).map_err(Error::from)? else {
        unreachable!("argument structs serialize to objects");
    };
    for (key, value) in fields.iter_mut() {
        let explicit = matches!(matches.value_source(key), Some(ValueSource::CommandLine));
        if !explicit {
            if let Some(v) = file_config.get(key) {
                *value = v.clone();
            }
        }
    }
    // type-check the merged values now so a bad config is a usage error
    serde_json::from_value::<T>(Value::Object(fields.clone())).map_err(|e| Failure::Usage(format!("config: {e}")))?;
    Ok(fields)
}

fn execute(name: &str, config: Value, out: &Path) -> Result<(RunManifest, bool), Failure> {
    let global: GlobalArgs = parse_config(&config)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(global.threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    fs::create_dir_all(out).map_err(Error::from)?;
    let started = now_rfc3339();
    let mut artifacts = Artifacts::new(out);
    let outcome = match name {
        "check-family" => commands::check_family(&parse_config(&config)?, &mut artifacts)?,
        "invert" => commands::invert(&parse_config(&config)?, &mut artifacts)?,
        "cke" => commands::cke(&parse_config(&config)?, &mut artifacts)?,
        "km" => commands::km(&parse_config(&config)?, &mut artifacts)?,
        "simulate" => commands::simulate(&parse_config(&config)?, global.seed, &mut artifacts)?,
        "price" => commands::price(&parse_config(&config)?, global.seed, &mut artifacts)?,
        other => return Err(Failure::Usage(format!("unknown command '{other}'"))),
    };
    let mut summary = Map::new();
    summary.insert("command".into(), Value::from(name));
    summary.insert("pass".into(), Value::from(outcome.pass));
    if let Value::Object(fields) = outcome.summary {
        summary.extend(fields);
    }
    let summary = Value::Object(summary);
    let summary_path = artifacts.path(&format!("{name}_summary.json"));
    let mut text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    text.push('\n');
    fs::write(&summary_path, text).map_err(Error::from)?;

    let mut outputs = std::collections::BTreeMap::new();
    for n in &artifacts.names {
        outputs.insert(n.clone(), sha256_file(&out.join(n))?);
    }
    let manifest = RunManifest {
        command: name.to_string(),
        config,
        seed: global.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: now_rfc3339(),
        outputs,
    };
    manifest.write(out)?;
    println!("{}", serde_json::to_string(&summary).map_err(Error::from)?);
    Ok((manifest, outcome.pass))
}

fn parse_config<T: DeserializeOwned>(config: &Value) -> Result<T, Failure> {
    serde_json::from_value(config.clone()).map_err(|e| Failure::Usage(format!("config: {e}")))
}

fn replay(manifest_path: &Path, out: &Path) -> Result<ExitCode, Failure> {
    let original = RunManifest::load(manifest_path).map_err(|e| Failure::Usage(e.to_string()))?;
    let (rerun, _) = execute(&original.command, original.config.clone(), out)?;
    let mismatches = original.digest_mismatches(&rerun);
    if mismatches.is_empty() {
        eprintln!("replay: {} outputs identical", original.outputs.len());
        Ok(ExitCode::from(EXIT_PASS))
    } else {
        eprintln!("replay: outputs differ: {}", mismatches.join(", "));
        Ok(ExitCode::from(EXIT_CHECK_FAIL))
    }
}
