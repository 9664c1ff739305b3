//! What-if studies over team count, extra branches or extra sources.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use restoration_core::mdp_builder::{build_with, BuildOptions};
use restoration_core::solver::solve;
use restoration_core::{DistributionSystem, Horizon, OptFlags};
use serde::{Deserialize, Serialize};

use crate::benchmark::VALUE_TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Teams,
    Branches,
    Sources,
}

impl FromStr for StudyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "teams" => Ok(StudyKind::Teams),
            "branches" => Ok(StudyKind::Branches),
            "sources" => Ok(StudyKind::Sources),
            other => Err(format!("unknown study kind '{other}' (expected teams, branches or sources)")),
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::Teams => "teams",
            StudyKind::Branches => "branches",
            StudyKind::Sources => "sources",
        })
    }
}

/// One variant of the base problem. Bus ids are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    /// Team start buses (teams study).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teams: Option<Vec<usize>>,
    /// Branches added to the base system (branches study).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_branches: Option<Vec<[usize; 2]>>,
    /// Complete source list (sources study).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum VariantFile {
    Wrapped { variants: Vec<Variant> },
    Bare(Vec<Variant>),
}

pub fn parse_variants(text: &str) -> Result<Vec<Variant>> {
    let file: VariantFile = serde_json::from_str(text).context("variant file must be a list of variants")?;
    Ok(match file {
        VariantFile::Wrapped { variants } | VariantFile::Bare(variants) => variants,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantResult {
    pub name: String,
    pub states: usize,
    pub longest_horizon: u32,
    pub value: f64,
    /// Value divided by the number of buses.
    pub normalized_value: f64,
}

/// Comparison of a variant against one whose resources it strictly extends.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityNote {
    pub smaller: String,
    pub larger: String,
    /// `value(larger) - value(smaller)`; never positive when monotone.
    pub delta: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub flags: String,
    pub horizon: u32,
    pub variants: Vec<VariantResult>,
    pub monotonicity: Vec<MonotonicityNote>,
}

impl StudyReport {
    pub fn violations(&self) -> Vec<&MonotonicityNote> {
        self.monotonicity.iter().filter(|n| !n.holds).collect()
    }
}

fn to_zero_based(ids: &[usize], n: usize) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&b| if (1..=n).contains(&b) { Ok(b - 1) } else { bail!("bus {b} does not exist") })
        .collect()
}

/// The variant as a system, plus its resource multiset for comparisons.
pub fn apply_variant(base: &DistributionSystem, kind: StudyKind, v: &Variant) -> Result<(DistributionSystem, Vec<usize>)> {
    let n = base.bus_count();
    let missing = |field: &str| anyhow::anyhow!("variant '{}' of a {kind} study needs \"{field}\"", v.name);
    let (system, mut resources) = match kind {
        StudyKind::Teams => {
            let starts = to_zero_based(v.teams.as_ref().ok_or_else(|| missing("teams"))?, n)?;
            (base.with_team_starts(&starts)?, starts)
        }
        StudyKind::Branches => {
            let extra = v.extra_branches.as_ref().ok_or_else(|| missing("extra_branches"))?;
            let mut pairs = Vec::with_capacity(extra.len());
            let mut keys = Vec::with_capacity(extra.len());
            for [a, b] in extra {
                let ends = to_zero_based(&[*a, *b], n)?;
                pairs.push((ends[0], ends[1]));
                keys.push(ends[0].min(ends[1]) * n + ends[0].max(ends[1]));
            }
            (base.with_extra_branches(&pairs)?, keys)
        }
        StudyKind::Sources => {
            let sources = to_zero_based(v.sources.as_ref().ok_or_else(|| missing("sources"))?, n)?;
            (base.with_sources(&sources)?, sources)
        }
    };
    resources.sort_unstable();
    Ok((system, resources))
}

/// Multiset inclusion `small ⊊ large` on sorted lists.
fn strictly_extends(large: &[usize], small: &[usize]) -> bool {
    if large.len() <= small.len() {
        return false;
    }
    let mut counts: BTreeMap<usize, isize> = BTreeMap::new();
    for &x in large {
        *counts.entry(x).or_default() += 1;
    }
    for &x in small {
        *counts.entry(x).or_default() -= 1;
    }
    counts.values().all(|&c| c >= 0)
}

pub fn run_study(
    base: &DistributionSystem,
    kind: StudyKind,
    variants: &[Variant],
    flags: OptFlags,
    horizon: Option<u32>,
    options: &BuildOptions,
) -> Result<StudyReport> {
    if variants.is_empty() {
        bail!("the study has no variants");
    }
    let mut systems = Vec::with_capacity(variants.len());
    let mut longest = Vec::with_capacity(variants.len());
    for v in variants {
        let (system, resources) = apply_variant(base, kind, v).with_context(|| format!("variant '{}'", v.name))?;
        let mdp = build_with(&system, flags, options).with_context(|| format!("variant '{}'", v.name))?;
        longest.push(mdp.longest_horizon()?);
        systems.push((system, resources));
    }
    // Compare at one horizon: values at different horizons are not comparable.
    let horizon = horizon.unwrap_or_else(|| longest.iter().copied().max().unwrap_or(1).max(1));

    let mut results = Vec::with_capacity(variants.len());
    for ((v, (system, _)), &own) in variants.iter().zip(&systems).zip(&longest) {
        let mdp = build_with(system, flags, options)?;
        let policy = solve(&mdp, Horizon::Fixed(horizon), false)?;
        results.push(VariantResult {
            name: v.name.clone(),
            states: mdp.state_count(),
            longest_horizon: own,
            value: policy.initial_value(),
            normalized_value: policy.initial_value() / system.bus_count() as f64,
        });
    }

    let mut notes = Vec::new();
    for (i, (_, small)) in systems.iter().enumerate() {
        for (j, (_, large)) in systems.iter().enumerate() {
            if i != j && strictly_extends(large, small) {
                let delta = results[j].value - results[i].value;
                notes.push(MonotonicityNote {
                    smaller: results[i].name.clone(),
                    larger: results[j].name.clone(),
                    delta,
                    holds: delta <= VALUE_TOLERANCE * results[i].value.abs().max(1.0),
                });
            }
        }
    }
    Ok(StudyReport { kind, flags: flags.label(), horizon, variants: results, monotonicity: notes })
}
