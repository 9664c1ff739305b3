//! Cross-checks reduced models against the naive reference model.

use std::ops::Range;

use anyhow::Result;
use rayon::prelude::*;
use restoration_core::mdp_builder::build;
use restoration_core::oracle::{oracle_longest_horizon, oracle_value, random_instance};
use restoration_core::solver::{solve, Horizon};
use restoration_core::OptFlags;
use serde::Serialize;

/// Absolute tolerance between a reduced model and the reference value.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct VerifyMismatch {
    pub seed: u64,
    pub flags: String,
    pub horizon: u32,
    pub value: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seeds: u64,
    pub max_buses: usize,
    pub max_teams: usize,
    pub comparisons: usize,
    pub mismatches: Vec<VerifyMismatch>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares every subset in `subsets` with the reference on the seeded
/// random instances, at the reference model's longest horizon.
pub fn run_verify(seeds: Range<u64>, max_buses: usize, max_teams: usize, subsets: &[OptFlags]) -> Result<VerifyReport> {
    let per_seed: Vec<Result<Vec<VerifyMismatch>>> = seeds
        .clone()
        .into_par_iter()
        .map(|seed| {
            let system = random_instance(seed, max_buses, max_teams);
            let horizon = oracle_longest_horizon(&system)?.max(1);
            let reference = oracle_value(&system, horizon)?;
            let mut found = Vec::new();
            for &flags in subsets {
                let mdp = build(&system, flags)?;
                let value = solve(&mdp, Horizon::Fixed(horizon), false)?.initial_value();
                if (value - reference).abs() > ORACLE_TOLERANCE {
                    found.push(VerifyMismatch { seed, flags: flags.label(), horizon, value, reference });
                }
            }
            Ok(found)
        })
        .collect();
    let mut mismatches = Vec::new();
    for r in per_seed {
        mismatches.extend(r?);
    }
    let count = seeds.end.saturating_sub(seeds.start);
    Ok(VerifyReport {
        seeds: count,
        max_buses,
        max_teams,
        comparisons: count as usize * subsets.len(),
        mismatches,
    })
}
