//! Builds and solves one problem under several reduction sets.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Result};
use restoration_core::mdp_builder::{build_with, BuildOptions};
use restoration_core::solver::{average_expected_cost_per_bus, solve};
use restoration_core::{DistributionSystem, Horizon, OptFlags};
use serde::Serialize;

/// Relative tolerance for "same optimal value" across reduction sets.
pub const VALUE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub subsets: Vec<OptFlags>,
    pub repeats: usize,
    /// Shared horizon; the longest model horizon over all subsets if absent.
    pub horizon: Option<u32>,
    pub build: BuildOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub problem: String,
    pub flags: String,
    pub states: usize,
    pub actions: usize,
    pub transitions: usize,
    pub terminal_states: usize,
    pub longest_horizon: u32,
    pub horizon: u32,
    pub build_ms_median: f64,
    pub solve_ms_median: f64,
    pub initial_value: f64,
    pub expected_cost_per_bus: f64,
    pub value_matches: bool,
    pub repeats: usize,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub horizon: u32,
}

impl BenchmarkReport {
    pub fn mismatches(&self) -> Vec<&BenchmarkRow> {
        self.rows.iter().filter(|r| !r.value_matches).collect()
    }
}

/// Parses a comma-separated subset list such as `P,O,SPOW`; `-` or `none`
/// stands for the plain model.
pub fn parse_subsets(text: &str) -> Result<Vec<OptFlags>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        let flags = match part.to_ascii_lowercase().as_str() {
            "-" | "none" | "" => OptFlags::NONE,
            _ => OptFlags::parse(part).map_err(anyhow::Error::msg)?,
        };
        if !out.contains(&flags) {
            out.push(flags);
        }
    }
    Ok(out)
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Microsecond resolution is plenty for a report.
fn round_ms(ms: f64) -> f64 {
    (ms * 1e3).round() / 1e3
}

pub fn values_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= VALUE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Runs every subset. Values are compared at one common horizon because
/// optimal values at different horizons differ by the terminal cost rate.
pub fn run_benchmark(system: &DistributionSystem, problem: &str, options: &BenchmarkOptions) -> Result<BenchmarkReport> {
    if options.subsets.is_empty() {
        bail!("no reduction subsets to benchmark");
    }
    let repeats = options.repeats.max(1);

    // First pass: timed builds and each model's own longest horizon.
    let mut builds = Vec::with_capacity(options.subsets.len());
    for &flags in &options.subsets {
        let mut times = Vec::with_capacity(repeats);
        let mut last = None;
        for _ in 0..repeats {
            let started = Instant::now();
            let mdp = build_with(system, flags, &options.build)?;
            times.push(started.elapsed().as_secs_f64() * 1e3);
            last = Some(mdp);
        }
        let mdp = last.expect("at least one repeat");
        builds.push((flags, median(times), mdp.longest_horizon()?, mdp.metadata().clone()));
    }
    let horizon = options.horizon.unwrap_or_else(|| builds.iter().map(|b| b.2).max().unwrap_or(1).max(1));

    // Second pass: timed solves at the common horizon.
    let mut rows: Vec<BenchmarkRow> = Vec::with_capacity(builds.len());
    for (flags, build_ms, longest, meta) in builds {
        let mdp = build_with(system, flags, &options.build)?;
        let mut times = Vec::with_capacity(repeats);
        let mut last = None;
        for _ in 0..repeats {
            let policy = solve(&mdp, Horizon::Fixed(horizon), false)?;
            times.push(policy.solve_seconds() * 1e3);
            last = Some(policy);
        }
        let policy = last.expect("at least one repeat");
        let value = policy.initial_value();
        let reference = rows.first().map_or(value, |r| r.initial_value);
        rows.push(BenchmarkRow {
            problem: problem.to_string(),
            flags: flags.label(),
            states: meta.states,
            actions: meta.actions,
            transitions: meta.transitions,
            terminal_states: meta.terminal_states,
            longest_horizon: longest,
            horizon,
            build_ms_median: round_ms(build_ms),
            solve_ms_median: round_ms(median(times)),
            initial_value: value,
            expected_cost_per_bus: average_expected_cost_per_bus(&policy, &mdp),
            value_matches: values_match(value, reference),
            repeats,
            threads: rayon::current_num_threads(),
        });
    }
    Ok(BenchmarkReport { rows, horizon })
}

pub fn write_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
