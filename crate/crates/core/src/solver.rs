//! Finite-horizon value iteration over a built model.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::mdp_builder::{BuildError, Mdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// The longest initial-to-terminal duration of the model (at least 1).
    Auto,
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error(transparent)]
    Model(#[from] BuildError),
    #[error("value layer {requested} is not retained (available: {available})")]
    LayerUnavailable { requested: u32, available: String },
    #[error("state index {0} out of range")]
    BadState(usize),
    #[error("action index {action} out of range for state {state} ({count} actions)")]
    BadAction { state: usize, action: usize, count: usize },
}

/// Optimal values and decisions at a fixed horizon.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    horizon: u32,
    values: Vec<f64>,
    chosen: Vec<u32>,
    /// Layers `horizon - tail.len() + 1 ..= horizon`, oldest first.
    tail: Vec<Vec<f64>>,
    /// Every layer `0..=horizon` when requested.
    layers: Option<Vec<Vec<f64>>>,
    solve_seconds: f64,
}

const TIE_TOLERANCE: f64 = 1e-12;

fn better(candidate: f64, best: f64) -> bool {
    candidate < best - TIE_TOLERANCE * best.abs().max(1.0)
}

/// Expected cost of `action` in `state` with `n` units remaining, reading
/// `layer(m)` for the value of successors at remaining time `m`.
fn q_value<'a>(mdp: &Mdp, state: usize, action: usize, n: u32, layer: &impl Fn(u32) -> Option<&'a [f64]>) -> f64 {
    mdp.transitions(state, action)
        .iter()
        .map(|t| {
            let accrued = f64::from(t.cost_rate) * f64::from(n.min(t.duration));
            let future = if t.duration >= n {
                0.0
            } else {
                layer(n - t.duration).map_or(0.0, |l| l[t.target as usize])
            };
            t.probability * (accrued + future)
        })
        .sum()
}

fn best_action<'a>(mdp: &Mdp, state: usize, n: u32, layer: &impl Fn(u32) -> Option<&'a [f64]>) -> (f64, u32) {
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for a in 0..mdp.action_count(state) {
        let q = q_value(mdp, state, a, n, layer);
        if a == 0 || better(q, best) {
            best = q;
            arg = a as u32;
        }
    }
    (best, arg)
}

/// Solves `mdp`. With `retain_layers` every intermediate layer is kept so
/// values at any remaining time can be queried afterwards.
pub fn solve(mdp: &Mdp, horizon: Horizon, retain_layers: bool) -> Result<PolicyTable, SolveError> {
    let started = std::time::Instant::now();
    let horizon = match horizon {
        Horizon::Fixed(0) => return Err(SolveError::ZeroHorizon),
        Horizon::Fixed(h) => h,
        Horizon::Auto => mdp.longest_horizon()?.max(1),
    };
    let n_states = mdp.state_count();
    // The zero-duration root reads its successors' values of the same layer.
    let root_last = mdp.has_virtual_root();
    let ring_len = mdp.max_duration() as usize + 1;
    let mut ring: Vec<Vec<f64>> = vec![Vec::new(); ring_len];
    let mut all: Option<Vec<Vec<f64>>> = retain_layers.then(|| vec![vec![0.0; n_states]]);
    let mut chosen = vec![0u32; n_states];

    for n in 1..=horizon {
        let slot = n as usize % ring_len;
        let mut current = std::mem::take(&mut ring[slot]);
        current.resize(n_states, 0.0);
        let ring_ref = &ring;
        let layer = |m: u32| -> Option<&[f64]> {
            let l = &ring_ref[m as usize % ring_len];
            (!l.is_empty()).then_some(l.as_slice())
        };
        let last = n == horizon;
        let results: Vec<(f64, u32)> = (0..n_states)
            .into_par_iter()
            .map(|s| {
                if root_last && s == 0 {
                    (0.0, 0)
                } else {
                    best_action(mdp, s, n, &layer)
                }
            })
            .collect();
        for (s, (value, arg)) in results.into_iter().enumerate() {
            current[s] = value;
            if last {
                chosen[s] = arg;
            }
        }
        if root_last {
            let same = |m: u32| -> Option<&[f64]> {
                if m == n {
                    Some(current.as_slice())
                } else {
                    layer(m)
                }
            };
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for a in 0..mdp.action_count(0) {
                let q: f64 = mdp
                    .transitions(0, a)
                    .iter()
                    .map(|t| {
                        let accrued = f64::from(t.cost_rate) * f64::from(n.min(t.duration));
                        let future = if t.duration == 0 {
                            current[t.target as usize]
                        } else if t.duration >= n {
                            0.0
                        } else {
                            same(n - t.duration).map_or(0.0, |l| l[t.target as usize])
                        };
                        t.probability * (accrued + future)
                    })
                    .sum();
                if a == 0 || better(q, best) {
                    best = q;
                    arg = a as u32;
                }
            }
            current[0] = best;
            if last {
                chosen[0] = arg;
            }
        }
        if let Some(all) = all.as_mut() {
            all.push(current.clone());
        }
        ring[slot] = current;
    }

    let first_tail = horizon.saturating_sub(ring_len as u32 - 1).max(1);
    let tail: Vec<Vec<f64>> = (first_tail..=horizon)
        .map(|m| ring[m as usize % ring_len].clone())
        .collect();
    let values = tail.last().cloned().unwrap_or_default();
    Ok(PolicyTable {
        horizon,
        values,
        chosen,
        tail,
        layers: all,
        solve_seconds: started.elapsed().as_secs_f64(),
    })
}

impl PolicyTable {
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn optimal_value(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn initial_value(&self) -> f64 {
        self.values[0]
    }

    pub fn chosen_action(&self, state: usize) -> usize {
        self.chosen[state] as usize
    }

    pub fn solve_seconds(&self) -> f64 {
        self.solve_seconds
    }

    pub fn has_all_layers(&self) -> bool {
        self.layers.is_some()
    }

    /// Optimal value of `state` with `remaining` time units left.
    pub fn value_at(&self, state: usize, remaining: u32) -> Result<f64, SolveError> {
        if state >= self.values.len() {
            return Err(SolveError::BadState(state));
        }
        if remaining == 0 {
            return Ok(0.0);
        }
        if let Some(layers) = &self.layers {
            if let Some(layer) = layers.get(remaining as usize) {
                return Ok(layer[state]);
            }
        }
        let first = self.horizon + 1 - self.tail.len() as u32;
        if (first..=self.horizon).contains(&remaining) {
            return Ok(self.tail[(remaining - first) as usize][state]);
        }
        Err(SolveError::LayerUnavailable {
            requested: remaining,
            available: if self.layers.is_some() {
                format!("0..={}", self.horizon)
            } else {
                format!("{first}..={}", self.horizon)
            },
        })
    }
}

/// Expected cost of taking `action` in `state` at the full horizon and
/// acting optimally afterwards.
pub fn what_if(policy: &PolicyTable, mdp: &Mdp, state: usize, action: usize) -> Result<f64, SolveError> {
    if state >= mdp.state_count() {
        return Err(SolveError::BadState(state));
    }
    let count = mdp.action_count(state);
    if action >= count {
        return Err(SolveError::BadAction { state, action, count });
    }
    let n = policy.horizon;
    let mut total = 0.0;
    for t in mdp.transitions(state, action) {
        let accrued = f64::from(t.cost_rate) * f64::from(n.min(t.duration));
        let future = if t.duration >= n && t.duration > 0 {
            0.0
        } else {
            policy.value_at(t.target as usize, n - t.duration)?
        };
        total += t.probability * (accrued + future);
    }
    Ok(total)
}

/// Initial value divided by the number of buses.
pub fn average_expected_cost_per_bus(policy: &PolicyTable, mdp: &Mdp) -> f64 {
    policy.initial_value() / mdp.bus_count() as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyExport {
    pub horizon: u32,
    pub initial_value: f64,
    pub expected_cost_per_bus: f64,
    pub flags: String,
    /// Physical team index held by each slot of the initial state.
    pub initial_team_order: Vec<usize>,
    pub states: Vec<PolicyExportState>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyExportState {
    pub index: usize,
    pub status: String,
    pub value: f64,
    pub action: usize,
    /// Commands of the chosen action; for the initial state in physical
    /// team order, elsewhere in the state's own team order.
    pub commands: Vec<String>,
}

pub fn export_policy(policy: &PolicyTable, mdp: &Mdp) -> PolicyExport {
    let order = mdp.root_team_order();
    let states = (0..mdp.state_count())
        .map(|s| {
            let a = policy.chosen_action(s);
            let mut commands = mdp.action(s, a).codes();
            if s == 0 {
                let mut physical = vec![String::new(); commands.len()];
                for (slot, &team) in order.iter().enumerate() {
                    physical[team] = commands[slot].clone();
                }
                commands = physical;
            }
            PolicyExportState {
                index: s,
                status: mdp.state(s).status.to_string(),
                value: policy.optimal_value(s),
                action: a,
                commands,
            }
        })
        .collect();
    PolicyExport {
        horizon: policy.horizon,
        initial_value: policy.initial_value(),
        expected_cost_per_bus: average_expected_cost_per_bus(policy, mdp),
        flags: mdp.flags().label(),
        initial_team_order: order.to_vec(),
        states,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flags::OptFlags;
    use crate::mdp_builder::build;
    use crate::system_model::{DistributionSystem, TeamStart, TravelTimeMatrix};

    fn single_bus(pf: f64) -> DistributionSystem {
        DistributionSystem::new(
            1,
            [],
            [0],
            vec![pf],
            TravelTimeMatrix::from_rows(vec![vec![0]]).unwrap(),
            vec![TeamStart::at(0)],
        )
        .unwrap()
    }

    fn two_bus_line() -> DistributionSystem {
        DistributionSystem::new(
            2,
            [(0, 1)],
            [0],
            vec![0.0, 0.0],
            TravelTimeMatrix::from_rows(vec![vec![0, 1], vec![1, 0]]).unwrap(),
            vec![TeamStart::at(0)],
        )
        .unwrap()
    }

    #[test]
    fn single_bus_value() {
        let mdp = build(&single_bus(0.25), OptFlags::NONE).unwrap();
        let policy = solve(&mdp, Horizon::Fixed(10), false).unwrap();
        assert!((policy.initial_value() - 2.5).abs() < 1e-12);
        assert!((average_expected_cost_per_bus(&policy, &mdp) - 2.5).abs() < 1e-12);
        let always = build(&single_bus(1.0), OptFlags::NONE).unwrap();
        let p = solve(&always, Horizon::Fixed(7), false).unwrap();
        assert_eq!(p.initial_value(), 7.0);
    }

    #[test]
    fn two_bus_line_value() {
        for flags in ["", "SPOW"] {
            let mdp = build(&two_bus_line(), OptFlags::parse(flags).unwrap()).unwrap();
            for h in [1, 3] {
                let policy = solve(&mdp, Horizon::Fixed(h), false).unwrap();
                assert!((policy.initial_value() - 1.0).abs() < 1e-12);
                assert!((average_expected_cost_per_bus(&policy, &mdp) - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn terminal_values_are_linear() {
        let mdp = build(&single_bus(0.25), OptFlags::NONE).unwrap();
        let policy = solve(&mdp, Horizon::Fixed(6), true).unwrap();
        for s in (0..mdp.state_count()).filter(|&s| mdp.is_terminal(s)) {
            let rate = f64::from(mdp.transitions(s, 0)[0].cost_rate);
            for n in 0..=6 {
                assert_eq!(policy.value_at(s, n).unwrap(), rate * f64::from(n));
            }
        }
    }

    #[test]
    fn zero_horizon_rejected() {
        let mdp = build(&single_bus(0.25), OptFlags::NONE).unwrap();
        assert_eq!(solve(&mdp, Horizon::Fixed(0), false).unwrap_err(), SolveError::ZeroHorizon);
        assert_eq!(solve(&mdp, Horizon::Auto, false).unwrap().horizon(), 1);
    }

    #[test]
    fn what_if_matches_chosen_action() {
        let mdp = build(&two_bus_line(), OptFlags::NONE).unwrap();
        let policy = solve(&mdp, Horizon::Fixed(4), false).unwrap();
        for s in 0..mdp.state_count() {
            let q = what_if(&policy, &mdp, s, policy.chosen_action(s)).unwrap();
            assert!((q - policy.optimal_value(s)).abs() < 1e-12);
            for a in 0..mdp.action_count(s) {
                assert!(what_if(&policy, &mdp, s, a).unwrap() >= policy.optimal_value(s) - 1e-12);
            }
        }
        assert!(matches!(what_if(&policy, &mdp, 0, 99), Err(SolveError::BadAction { .. })));
        assert!(matches!(policy.value_at(0, 2), Err(SolveError::LayerUnavailable { .. })));
    }
}
