//! Command-line workflows: solve, verify, benchmark, study, partition,
//! export and serve.
//!
//! Every JSON output starts with a `config` object recording the tool
//! version and the settings that produced it.

pub mod benchmark;
pub mod study;
pub mod verify;

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use restoration_core::mdp_builder::{build_with, BuildOptions, DEFAULT_STATE_CAP};
use restoration_core::partition::{solve_partitioned, PartitionError, PartitionSpec};
use restoration_core::solver::{average_expected_cost_per_bus, export_policy, solve};
use restoration_core::system_model::{LoadReport, PartitionEntry};
use restoration_core::{BuildError, DistributionSystem, Horizon, ModelError, OptFlags, ProblemDocument, SolveError};
use restoration_service::ServiceConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::benchmark::{parse_subsets, run_benchmark, write_csv, BenchmarkOptions};
use crate::study::{parse_variants, run_study, StudyKind};
use crate::verify::run_verify;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INVALID_INPUT: u8 = 2;
pub const EXIT_RESOURCE_CAP: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "restoration", version, about = "Exact restoration planning for damaged distribution grids")]
pub struct Cli {
    /// Worker threads for building and solving (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and solve one problem.
    Solve {
        problem: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Write the full policy table here.
        #[arg(long)]
        policy_out: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Compare every reduction set with the naive reference on random instances.
    Verify {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 6)]
        max_buses: usize,
        #[arg(long, default_value_t = 2)]
        max_teams: usize,
        /// Comma-separated reduction sets; all fifteen when absent.
        #[arg(long, allow_hyphen_values = true)]
        subsets: Option<String>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// State counts, timings and values per reduction set, as CSV.
    Benchmark {
        problem: PathBuf,
        /// Comma-separated reduction sets such as `-,P,O,SPOW`; all fifteen when absent.
        #[arg(long, allow_hyphen_values = true)]
        subsets: Option<String>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Common horizon; the longest model horizon when absent.
        #[arg(long)]
        horizon: Option<u32>,
        #[arg(long, env = "RESTORATION_MAX_STATES", default_value_t = DEFAULT_STATE_CAP)]
        max_states: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Solve variants with more teams, branches or sources.
    Study {
        problem: PathBuf,
        #[arg(long)]
        kind: StudyKind,
        /// JSON list of variants.
        #[arg(long)]
        variants: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Solve bus groups independently.
    Partition {
        problem: PathBuf,
        /// JSON list of groups; the document's own partitions when absent.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Write the built model or the solved policy as JSON.
    Export {
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportKind::Policy)]
        what: ExportKind,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory with the console build, served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long, env = "RESTORATION_MAX_STATES", default_value_t = DEFAULT_STATE_CAP)]
        max_states: usize,
        /// Reductions used when a request names none.
        #[arg(long, default_value = "SPOW", allow_hyphen_values = true)]
        flags: String,
    },
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Reductions over V, P, W, O, S; `-` for none.
    #[arg(long, default_value = "SPOW", allow_hyphen_values = true)]
    pub flags: String,
    /// Positive step count or `auto` (the longest model horizon).
    #[arg(long, default_value = "auto")]
    pub horizon: String,
    #[arg(long, env = "RESTORATION_MAX_STATES", default_value_t = DEFAULT_STATE_CAP)]
    pub max_states: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportKind {
    Mdp,
    Policy,
}

/// Rejected user input; reported with exit status 2.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

fn invalid(message: impl Into<String>) -> anyhow::Error {
    InvalidInput(message.into()).into()
}

impl ModelArgs {
    pub fn flags(&self) -> Result<OptFlags> {
        parse_flags(&self.flags)
    }

    pub fn horizon(&self) -> Result<Horizon> {
        parse_horizon(&self.horizon)
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions { state_cap: self.max_states, ..BuildOptions::default() }
    }

    fn config(&self) -> Value {
        json!({ "flags": self.flags, "horizon": self.horizon, "max_states": self.max_states })
    }
}

pub fn parse_flags(text: &str) -> Result<OptFlags> {
    if text.trim() == "-" || text.eq_ignore_ascii_case("none") {
        return Ok(OptFlags::NONE);
    }
    OptFlags::parse(text).map_err(invalid)
}

pub fn parse_horizon(text: &str) -> Result<Horizon> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(Horizon::Auto);
    }
    match text.parse::<u32>() {
        Ok(0) | Err(_) => Err(invalid(format!("horizon '{text}' must be a positive integer or 'auto'"))),
        Ok(h) => Ok(Horizon::Fixed(h)),
    }
}

/// Exit status for an error: 2 for invalid input, 3 for a resource cap,
/// 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InvalidInput>() || cause.is::<ModelError>() {
            return EXIT_INVALID_INPUT;
        }
        if let Some(e) = cause.downcast_ref::<BuildError>() {
            return build_exit(e);
        }
        if let Some(SolveError::Model(e)) = cause.downcast_ref::<SolveError>() {
            return build_exit(e);
        }
        if let Some(e) = cause.downcast_ref::<PartitionError>() {
            return match e {
                PartitionError::Build { source, .. } => build_exit(source),
                PartitionError::Solve { .. } => EXIT_FAILURE,
                _ => EXIT_INVALID_INPUT,
            };
        }
    }
    EXIT_FAILURE
}

fn build_exit(err: &BuildError) -> u8 {
    match err {
        BuildError::StateCap { .. } | BuildError::TooManyBuses { .. } => EXIT_RESOURCE_CAP,
        _ => EXIT_FAILURE,
    }
}

pub fn load(path: &Path) -> Result<(DistributionSystem, ProblemDocument, LoadReport)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let document = ProblemDocument::parse(&text).with_context(|| format!("loading {}", path.display()))?;
    let (system, report) = document.build().with_context(|| format!("loading {}", path.display()))?;
    Ok((system, document, report))
}

fn problem_name(path: &Path, system: &DistributionSystem) -> String {
    system
        .name()
        .map(str::to_string)
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

fn config_header(command: &str, extra: Value) -> Value {
    let mut config = json!({
        "tool": "restoration",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "threads": rayon::current_num_threads(),
    });
    if let (Some(base), Value::Object(more)) = (config.as_object_mut(), extra) {
        base.extend(more);
    }
    config
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn emit_json(output: Option<&Path>, config: Value, result: impl Serialize) -> Result<()> {
    let doc = json!({ "config": config, "result": result });
    emit(output, &serde_json::to_string_pretty(&doc)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutput {
    pub problem: String,
    pub buses: usize,
    pub teams: usize,
    pub flags: String,
    pub states: usize,
    pub actions: usize,
    pub transitions: usize,
    pub terminal_states: usize,
    pub horizon: u32,
    pub initial_value: f64,
    pub expected_cost_per_bus: f64,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    /// Recommended first command per team.
    pub initial_commands: Vec<String>,
    pub notes: Vec<String>,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Solve { problem, model, policy_out, output } => {
            let (system, _, report) = load(&problem)?;
            let flags = model.flags()?;
            let started = Instant::now();
            let mdp = build_with(&system, flags, &model.build_options())?;
            let build_seconds = started.elapsed().as_secs_f64();
            let policy = solve(&mdp, model.horizon()?, false)?;
            let export = export_policy(&policy, &mdp);
            let meta = mdp.metadata();
            let result = SolveOutput {
                problem: problem_name(&problem, &system),
                buses: system.bus_count(),
                teams: system.team_count(),
                flags: flags.label(),
                states: meta.states,
                actions: meta.actions,
                transitions: meta.transitions,
                terminal_states: meta.terminal_states,
                horizon: policy.horizon(),
                initial_value: policy.initial_value(),
                expected_cost_per_bus: average_expected_cost_per_bus(&policy, &mdp),
                build_seconds,
                solve_seconds: policy.solve_seconds(),
                initial_commands: export.states[0].commands.clone(),
                notes: report.notes,
            };
            let config = config_header("solve", model.config());
            if let Some(path) = policy_out {
                let doc = json!({ "config": config, "result": export });
                emit(Some(&path), &serde_json::to_string_pretty(&doc)?)?;
            }
            emit_json(output.as_deref(), config, result)
        }
        Command::Verify { seeds, first_seed, max_buses, max_teams, subsets, output } => {
            let subsets = match subsets {
                Some(text) => parse_subsets(&text).map_err(|e| invalid(e.to_string()))?,
                None => OptFlags::benchmark_subsets(),
            };
            let report = run_verify(first_seed..first_seed + seeds, max_buses, max_teams, &subsets)?;
            let passed = report.passed();
            let config = config_header(
                "verify",
                json!({ "first_seed": first_seed, "seeds": seeds, "max_buses": max_buses, "max_teams": max_teams }),
            );
            emit_json(output.as_deref(), config, &report)?;
            if !passed {
                anyhow::bail!("{} comparison(s) disagree with the reference model", report.mismatches.len());
            }
            Ok(())
        }
        Command::Benchmark { problem, subsets, repeats, horizon, max_states, output } => {
            let (system, _, _) = load(&problem)?;
            let subsets = match subsets {
                Some(text) => parse_subsets(&text).map_err(|e| invalid(e.to_string()))?,
                None => OptFlags::benchmark_subsets(),
            };
            let options = BenchmarkOptions {
                subsets,
                repeats,
                horizon,
                build: BuildOptions { state_cap: max_states, ..BuildOptions::default() },
            };
            let report = run_benchmark(&system, &problem_name(&problem, &system), &options)?;
            let mut buffer = Vec::new();
            write_csv(&report.rows, &mut buffer)?;
            emit(output.as_deref(), String::from_utf8(buffer)?.trim_end())?;
            let bad = report.mismatches();
            if let Some(row) = bad.first() {
                anyhow::bail!(
                    "optimal value under {} ({}) differs from {} ({}); the reductions disagree",
                    row.flags,
                    row.initial_value,
                    report.rows[0].flags,
                    report.rows[0].initial_value
                );
            }
            Ok(())
        }
        Command::Study { problem, kind, variants, model, output } => {
            let (system, _, _) = load(&problem)?;
            let text = fs::read_to_string(&variants).with_context(|| format!("cannot read {}", variants.display()))?;
            let list = parse_variants(&text).map_err(|e| invalid(format!("{}: {e:#}", variants.display())))?;
            let horizon = match model.horizon()? {
                Horizon::Auto => None,
                Horizon::Fixed(h) => Some(h),
            };
            let report = run_study(&system, kind, &list, model.flags()?, horizon, &model.build_options())?;
            let mut config = model.config();
            config["problem"] = json!(problem_name(&problem, &system));
            emit_json(output.as_deref(), config_header("study", config), &report)
        }
        Command::Partition { problem, groups, model, output } => {
            let (system, document, _) = load(&problem)?;
            let entries = match groups {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                    parse_groups(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?
                }
                None => document
                    .partitions
                    .clone()
                    .ok_or_else(|| invalid("no --groups file given and the problem defines no partitions"))?,
            };
            let spec = PartitionSpec::from_entries(&entries);
            let report = solve_partitioned(&system, &spec, model.flags()?, model.horizon()?, &model.build_options())?;
            if let Some(warning) = &report.warning {
                eprintln!("warning: {warning}");
            }
            emit_json(output.as_deref(), config_header("partition", model.config()), &report)
        }
        Command::Export { problem, what, model, output } => {
            let (system, _, _) = load(&problem)?;
            let mdp = build_with(&system, model.flags()?, &model.build_options())?;
            let config = config_header("export", model.config());
            match what {
                ExportKind::Mdp => emit_json(output.as_deref(), config, mdp.to_export()),
                ExportKind::Policy => {
                    let policy = solve(&mdp, model.horizon()?, false)?;
                    emit_json(output.as_deref(), config, export_policy(&policy, &mdp))
                }
            }
        }
        Command::Serve { port, host, static_dir, max_states, flags } => {
            let config = ServiceConfig { max_states, default_flags: parse_flags(&flags)?, static_dir };
            let addr = SocketAddr::new(host, port);
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            eprintln!("listening on http://{addr}");
            runtime.block_on(restoration_service::serve(config, addr)).context("serving HTTP")
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GroupFile {
    Wrapped { partitions: Vec<PartitionEntry> },
    Bare(Vec<PartitionEntry>),
}

fn parse_groups(text: &str) -> std::result::Result<Vec<PartitionEntry>, serde_json::Error> {
    Ok(match serde_json::from_str(text)? {
        GroupFile::Wrapped { partitions } | GroupFile::Bare(partitions) => partitions,
    })
}
