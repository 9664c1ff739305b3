//! Solving user-defined bus groups as independent systems.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::flags::OptFlags;
use crate::mdp_builder::{build_with, BuildError, BuildOptions};
use crate::solver::{average_expected_cost_per_bus, solve, Horizon, SolveError};
use crate::system_model::{DistributionSystem, ModelError, PartitionEntry, TeamStart};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionGroup {
    pub name: String,
    /// 0-based bus ids.
    pub buses: Vec<usize>,
    /// 0-based start buses, one per team.
    pub teams: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionSpec {
    pub groups: Vec<PartitionGroup>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("partition spec has no groups")]
    Empty,
    #[error("bus {0} does not exist")]
    UnknownBus(usize),
    #[error("bus {bus} appears in groups '{first}' and '{second}'")]
    Overlap { bus: usize, first: String, second: String },
    #[error("bus {0} is not covered by any group")]
    Uncovered(usize),
    #[error("group '{0}' contains no source bus")]
    NoSource(String),
    #[error("group '{0}' has no team")]
    NoTeam(String),
    #[error("group '{group}': team start bus {bus} lies outside the group")]
    TeamOutside { group: String, bus: usize },
    #[error("group '{group}': {source}")]
    Model { group: String, source: ModelError },
    #[error("group '{group}': {source}")]
    Build { group: String, source: BuildError },
    #[error("group '{group}': {source}")]
    Solve { group: String, source: SolveError },
}

impl PartitionSpec {
    /// Converts document entries (1-based ids).
    pub fn from_entries(entries: &[PartitionEntry]) -> Self {
        let groups = entries
            .iter()
            .map(|e| PartitionGroup {
                name: e.name.clone(),
                buses: e.buses.iter().map(|b| b.wrapping_sub(1)).collect(),
                teams: e.teams.iter().map(|b| b.wrapping_sub(1)).collect(),
            })
            .collect();
        Self { groups }
    }

    pub fn validate(&self, system: &DistributionSystem) -> Result<(), PartitionError> {
        if self.groups.is_empty() {
            return Err(PartitionError::Empty);
        }
        let n = system.bus_count();
        let mut owner: Vec<Option<usize>> = vec![None; n];
        for (g, group) in self.groups.iter().enumerate() {
            for &b in &group.buses {
                if b >= n {
                    return Err(PartitionError::UnknownBus(b.wrapping_add(1)));
                }
                if let Some(other) = owner[b] {
                    return Err(PartitionError::Overlap {
                        bus: b + 1,
                        first: self.groups[other].name.clone(),
                        second: group.name.clone(),
                    });
                }
                owner[b] = Some(g);
            }
        }
        if let Some(b) = owner.iter().position(Option::is_none) {
            return Err(PartitionError::Uncovered(b + 1));
        }
        for group in &self.groups {
            if !group.buses.iter().any(|&b| system.is_source(b)) {
                return Err(PartitionError::NoSource(group.name.clone()));
            }
            if group.teams.is_empty() {
                return Err(PartitionError::NoTeam(group.name.clone()));
            }
            if let Some(&b) = group.teams.iter().find(|b| !group.buses.contains(b)) {
                return Err(PartitionError::TeamOutside {
                    group: group.name.clone(),
                    bus: b.wrapping_add(1),
                });
            }
        }
        Ok(())
    }

    /// Branches whose endpoints lie in different groups, 1-based and sorted.
    pub fn severed_branches(&self, system: &DistributionSystem) -> Vec<[usize; 2]> {
        let mut owner = vec![usize::MAX; system.bus_count()];
        for (g, group) in self.groups.iter().enumerate() {
            for &b in &group.buses {
                if b < owner.len() {
                    owner[b] = g;
                }
            }
        }
        system
            .branches()
            .iter()
            .filter(|&&(a, b)| owner[a] != owner[b])
            .map(|&(a, b)| [a + 1, b + 1])
            .collect()
    }

    pub fn subsystem(&self, system: &DistributionSystem, group: usize) -> Result<DistributionSystem, PartitionError> {
        let g = &self.groups[group];
        system
            .induced(&g.buses, g.teams.iter().map(|&b| TeamStart::at(b)).collect())
            .map(|s| s.with_name(g.name.clone()))
            .map_err(|source| PartitionError::Model { group: g.name.clone(), source })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub buses: usize,
    pub teams: usize,
    pub states: usize,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub horizon: u32,
    pub optimal_value: f64,
    pub expected_cost_per_bus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub groups: Vec<GroupReport>,
    pub severed_branches: Vec<[usize; 2]>,
    pub total_value: f64,
    pub warning: Option<String>,
}

/// Builds and solves every group independently (in parallel).
pub fn solve_partitioned(
    system: &DistributionSystem,
    spec: &PartitionSpec,
    flags: OptFlags,
    horizon: Horizon,
    options: &BuildOptions,
) -> Result<PartitionReport, PartitionError> {
    spec.validate(system)?;
    let groups = (0..spec.groups.len())
        .into_par_iter()
        .map(|g| {
            let name = spec.groups[g].name.clone();
            let sub = spec.subsystem(system, g)?;
            let started = Instant::now();
            let mdp = build_with(&sub, flags, options)
                .map_err(|source| PartitionError::Build { group: name.clone(), source })?;
            let build_seconds = started.elapsed().as_secs_f64();
            let started = Instant::now();
            let policy = solve(&mdp, horizon, false)
                .map_err(|source| PartitionError::Solve { group: name.clone(), source })?;
            Ok(GroupReport {
                name,
                buses: sub.bus_count(),
                teams: sub.team_count(),
                states: mdp.state_count(),
                build_seconds,
                solve_seconds: started.elapsed().as_secs_f64(),
                horizon: policy.horizon(),
                optimal_value: policy.initial_value(),
                expected_cost_per_bus: average_expected_cost_per_bus(&policy, &mdp),
            })
        })
        .collect::<Result<Vec<_>, PartitionError>>()?;
    let severed = spec.severed_branches(system);
    let warning = (!severed.is_empty()).then(|| {
        format!(
            "{} branch(es) between groups are not used; the combined plan may be sub-optimal",
            severed.len()
        )
    });
    Ok(PartitionReport {
        total_value: groups.iter().map(|g| g.optimal_value).sum(),
        groups,
        severed_branches: severed,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system_model::derive_travel_matrix;

    fn six_bus(extra: &[(usize, usize)]) -> DistributionSystem {
        let coords = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]];
        let mut branches = vec![(0, 1), (1, 2), (3, 4), (4, 5)];
        branches.extend_from_slice(extra);
        DistributionSystem::new(
            6,
            branches,
            [0, 3],
            vec![0.5, 0.5, 0.25, 0.25, 0.25, 0.25],
            derive_travel_matrix(&coords, 1.0).unwrap(),
            vec![TeamStart::at(0), TeamStart::at(3)],
        )
        .unwrap()
    }

    fn halves() -> PartitionSpec {
        PartitionSpec {
            groups: vec![
                PartitionGroup { name: "west".into(), buses: vec![0, 1, 2], teams: vec![0] },
                PartitionGroup { name: "east".into(), buses: vec![3, 4, 5], teams: vec![3] },
            ],
        }
    }

    #[test]
    fn disconnected_halves_have_no_severed_branch() {
        let report = solve_partitioned(&six_bus(&[]), &halves(), OptFlags::ALL, Horizon::Auto, &BuildOptions::default())
            .unwrap();
        assert!(report.severed_branches.is_empty());
        assert!(report.warning.is_none());
        assert_eq!(report.groups.len(), 2);
        assert!(report.groups.iter().all(|g| g.buses == 3 && g.teams == 1));
    }

    #[test]
    fn cross_branch_is_severed() {
        let sys = six_bus(&[(2, 5)]);
        assert_eq!(halves().severed_branches(&sys), vec![[3, 6]]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let sys = six_bus(&[]);
        let mut spec = halves();
        spec.groups[1].buses = vec![4, 5];
        spec.groups[0].buses = vec![0, 1, 2, 3];
        assert_eq!(spec.validate(&sys), Err(PartitionError::NoSource("east".into())));
        let mut spec = halves();
        spec.groups[1].buses.push(2);
        assert!(matches!(spec.validate(&sys), Err(PartitionError::Overlap { bus: 3, .. })));
        let mut spec = halves();
        spec.groups[0].buses.pop();
        assert_eq!(spec.validate(&sys), Err(PartitionError::Uncovered(3)));
        let mut spec = halves();
        spec.groups[0].teams = vec![4];
        assert!(matches!(spec.validate(&sys), Err(PartitionError::TeamOutside { bus: 5, .. })));
        let mut spec = halves();
        spec.groups[0].teams.clear();
        assert_eq!(spec.validate(&sys), Err(PartitionError::NoTeam("west".into())));
    }
}
