//! Command-line front end for the latent-treatment pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use commands::{design, estimate, probe, report, score, simulate};
use config::{parse, read_config_value, resolve_value, SCHEMA_VERSION};
use error::{CliError, CliResult};
use output::{Outputs, RESOLVED_CONFIG_NAME};

pub const THREADS_ENV: &str = "LATENT_TREAT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "latent-treat", version, about = "Causal effects of steered latent features")]
pub struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. estimator.pi_min=0.02 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: latent-treat-out/<command>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 picks automatically.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank SAE features by L1-logistic probe weight.
    Probe,
    /// Score steering intensity and coherence per feature.
    Score,
    /// Build treatment, weights and (residualized) controls.
    Design,
    /// Fit the R-learner on a design bundle.
    Estimate,
    /// Run the semi-synthetic benchmark.
    Simulate,
    /// Combine stage outputs into CSV and SVG summaries.
    Report {
        /// Manifest files or stage output directories.
        manifests: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Probe => "probe",
            Command::Score => "score",
            Command::Design => "design",
            Command::Estimate => "estimate",
            Command::Simulate => "simulate",
            Command::Report { .. } => "report",
        }
    }
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    config: &'a T,
}

fn stage<T, F>(value: Value, out: &mut Outputs, f: F) -> CliResult<()>
where
    T: serde::de::DeserializeOwned + Serialize,
    F: FnOnce(&T, &mut Outputs) -> CliResult<()>,
{
    let cfg: T = parse(value)?;
    out.add_json(RESOLVED_CONFIG_NAME, &cfg)?;
    f(&cfg, out)
}

fn simulate_stage(mut value: Value, out: &mut Outputs) -> CliResult<()> {
    let obj = value.as_object_mut().expect("config is an object");
    obj.remove("schema_version");
    if let Some(seed) = obj.remove("seed") {
        if obj.contains_key("seeds") {
            return Err(CliError::validation("set only one of seed or seeds"));
        }
        obj.insert("seeds".into(), Value::Array(vec![seed]));
    }
    let cfg: simulate::ScenarioConfig = parse(value)?;
    out.add_json(RESOLVED_CONFIG_NAME, &Versioned { schema_version: SCHEMA_VERSION, config: &cfg })?;
    simulate::run(&cfg, out)
}

fn execute(cli: Cli) -> CliResult<()> {
    let name = cli.command.name();
    let raw = read_config_value(cli.config.as_deref())?;
    let mut value = resolve_value(raw, &cli.set, cli.seed)?;
    if let Command::Report { manifests } = &cli.command {
        if !manifests.is_empty() {
            let list = value
                .as_object_mut()
                .expect("config is an object")
                .entry("manifests")
                .or_insert_with(|| Value::Array(Vec::new()));
            let arr = list
                .as_array_mut()
                .ok_or_else(|| CliError::validation("manifests must be a list"))?;
            arr.extend(manifests.iter().map(|p| Value::String(p.display().to_string())));
        }
    }
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("latent-treat-out").join(name));
    let mut outputs = Outputs::default();
    let work = |outputs: &mut Outputs| -> CliResult<()> {
        match &cli.command {
            Command::Probe => stage(value, outputs, probe::run),
            Command::Score => stage(value, outputs, score::run),
            Command::Design => stage(value, outputs, design::run),
            Command::Estimate => stage(value, outputs, estimate::run),
            Command::Simulate => simulate_stage(value, outputs),
            Command::Report { .. } => stage(value, outputs, report::run),
        }
    };
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    pool.install(|| work(&mut outputs))?;
    outputs.commit(&out_dir, name)?;
    Ok(())
}

/// Parse arguments, run one stage and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
