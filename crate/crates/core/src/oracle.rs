//! A deliberately plain reference model used to cross-check the builder and
//! solver. It steps time one unit at a time, keeps every team permutation,
//! applies no eliminations and resolves outcomes by enumerating damage
//! assignments. Nothing here is shared with the builder or the solver.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::energization::BusStatus;
use crate::system_model::{derive_travel_matrix, DistributionSystem, TeamStart};

pub const ORACLE_STATE_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("reference model exceeds {limit} states")]
    TooLarge { limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Cmd {
    Wait,
    Go(usize),
    Cont,
}

type Teams = Vec<(usize, u32)>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Node {
    status: Vec<BusStatus>,
    teams: Teams,
}

fn attemptable(system: &DistributionSystem, status: &[BusStatus], bus: usize) -> bool {
    status[bus] == BusStatus::Unknown
        && (system.is_source(bus)
            || system.neighbors(bus).iter().any(|&n| status[n] == BusStatus::Energized))
}

/// Unknown buses reachable from an attemptable bus through unknown buses.
fn reachable(system: &DistributionSystem, status: &[BusStatus]) -> Vec<bool> {
    let n = status.len();
    let mut seen: Vec<bool> = (0..n).map(|b| attemptable(system, status, b)).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&b| seen[b]).collect();
    while let Some(b) = stack.pop() {
        for &m in system.neighbors(b) {
            if !seen[m] && status[m] == BusStatus::Unknown {
                seen[m] = true;
                stack.push(m);
            }
        }
    }
    seen
}

fn unresolved_cost(status: &[BusStatus]) -> f64 {
    status.iter().filter(|s| **s != BusStatus::Energized).count() as f64
}

/// Outcome distribution of attempting, in any order, every bus that can be
/// attempted at a team position, computed by enumerating which candidate
/// buses are damaged.
pub fn exhaustive_outcomes(
    system: &DistributionSystem,
    status: &[BusStatus],
    positions: &[usize],
) -> Vec<(Vec<BusStatus>, f64)> {
    let candidates: Vec<usize> = (0..status.len())
        .filter(|&b| status[b] == BusStatus::Unknown && positions.contains(&b))
        .collect();
    let mut result: Vec<(Vec<BusStatus>, f64)> = Vec::new();
    for mask in 0u64..(1u64 << candidates.len()) {
        let mut weight = 1.0;
        for (k, &b) in candidates.iter().enumerate() {
            let pf = system.pf(b);
            weight *= if mask >> k & 1 == 1 { pf } else { 1.0 - pf };
        }
        if weight == 0.0 {
            continue;
        }
        let mut next = status.to_vec();
        while let Some(k) = candidates.iter().position(|&b| attemptable(system, &next, b)) {
            next[candidates[k]] = if mask >> k & 1 == 1 {
                BusStatus::Damaged
            } else {
                BusStatus::Energized
            };
        }
        match result.iter_mut().find(|(s, _)| *s == next) {
            Some(entry) => entry.1 += weight,
            None => result.push((next, weight)),
        }
    }
    result
}

fn positions(teams: &Teams) -> Vec<usize> {
    teams.iter().filter(|t| t.1 == 0).map(|t| t.0).collect()
}

struct Reference<'a> {
    system: &'a DistributionSystem,
    index: HashMap<Node, usize>,
    nodes: Vec<Node>,
    terminal: Vec<bool>,
    /// Per node, per action: (probability, successor).
    choices: Vec<Vec<Vec<(f64, usize)>>>,
    root_is_attempt: bool,
}

impl<'a> Reference<'a> {
    fn intern(&mut self, node: Node) -> Result<usize, OracleError> {
        if let Some(&i) = self.index.get(&node) {
            return Ok(i);
        }
        if self.nodes.len() >= ORACLE_STATE_LIMIT {
            return Err(OracleError::TooLarge { limit: ORACLE_STATE_LIMIT });
        }
        let i = self.nodes.len();
        self.index.insert(node.clone(), i);
        self.nodes.push(node);
        Ok(i)
    }

    fn commands(&self, node: &Node, reach: &[bool], team: usize) -> Vec<Cmd> {
        let (here, rem) = node.teams[team];
        if rem > 0 {
            return vec![Cmd::Cont];
        }
        let mut out = Vec::new();
        if reach[here] {
            out.push(Cmd::Wait);
        }
        out.extend((0..reach.len()).filter(|&b| reach[b] && b != here).map(Cmd::Go));
        out
    }

    fn step(&self, node: &Node, action: &[Cmd]) -> Vec<(Vec<BusStatus>, Teams, f64)> {
        let teams: Teams = node
            .teams
            .iter()
            .zip(action)
            .map(|(&(here, rem), cmd)| match *cmd {
                Cmd::Wait => (here, rem),
                Cmd::Cont => (here, rem - 1),
                Cmd::Go(b) => (b, self.system.time(here, b) - 1),
            })
            .collect();
        exhaustive_outcomes(self.system, &node.status, &positions(&teams))
            .into_iter()
            .map(|(s, p)| (s, teams.clone(), p))
            .collect()
    }

    fn explore(system: &'a DistributionSystem) -> Result<Self, OracleError> {
        let root = Node {
            status: system.initial_status().to_vec(),
            teams: system.teams().iter().map(|t| (t.bus, t.remaining)).collect(),
        };
        let root_is_attempt = positions(&root.teams)
            .iter()
            .any(|&b| attemptable(system, &root.status, b));
        let mut model = Reference {
            system,
            index: HashMap::new(),
            nodes: Vec::new(),
            terminal: Vec::new(),
            choices: Vec::new(),
            root_is_attempt,
        };
        model.intern(root)?;
        let mut next = 0;
        while next < model.nodes.len() {
            let node = model.nodes[next].clone();
            let n = node.status.len();
            let terminal = !(0..n).any(|b| attemptable(system, &node.status, b));
            let mut per_action = Vec::new();
            if next == 0 && root_is_attempt {
                let mut edges = Vec::new();
                for (s, p) in exhaustive_outcomes(system, &node.status, &positions(&node.teams)) {
                    edges.push((p, model.intern(Node { status: s, teams: node.teams.clone() })?));
                }
                per_action.push(edges);
            } else if !terminal {
                let reach = reachable(system, &node.status);
                let options: Vec<Vec<Cmd>> =
                    (0..node.teams.len()).map(|i| model.commands(&node, &reach, i)).collect();
                let mut combos: Vec<Vec<Cmd>> = vec![Vec::new()];
                for opts in &options {
                    combos = combos
                        .into_iter()
                        .flat_map(|prefix| {
                            opts.iter().map(move |c| {
                                let mut v = prefix.clone();
                                v.push(*c);
                                v
                            })
                        })
                        .collect();
                }
                for action in combos {
                    let progress = action.iter().zip(&node.teams).any(|(c, t)| match *c {
                        Cmd::Go(b) => attemptable(system, &node.status, b),
                        Cmd::Cont => attemptable(system, &node.status, t.0),
                        Cmd::Wait => false,
                    });
                    if !progress {
                        continue;
                    }
                    let mut edges = Vec::new();
                    for (s, teams, p) in model.step(&node, &action) {
                        edges.push((p, model.intern(Node { status: s, teams })?));
                    }
                    per_action.push(edges);
                }
            }
            model.terminal.push(terminal);
            model.choices.push(per_action);
            next += 1;
        }
        Ok(model)
    }

    fn value(&self, horizon: u32) -> f64 {
        let count = self.nodes.len();
        let mut previous = vec![0.0f64; count];
        for _ in 1..=horizon {
            let mut current = vec![0.0f64; count];
            for i in 0..count {
                if self.root_is_attempt && i == 0 {
                    continue;
                }
                let rate = unresolved_cost(&self.nodes[i].status);
                current[i] = if self.terminal[i] {
                    rate + previous[i]
                } else {
                    self.choices[i]
                        .iter()
                        .map(|edges| edges.iter().map(|&(p, j)| p * (rate + previous[j])).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                };
            }
            if self.root_is_attempt {
                current[0] = self.choices[0][0].iter().map(|&(p, j)| p * current[j]).sum();
            }
            previous = current;
        }
        previous[0]
    }

    fn longest(&self) -> u32 {
        // Successors are always discovered after their predecessors are
        // interned, but not necessarily in topological order, so memoize.
        let mut memo: Vec<Option<u32>> = vec![None; self.nodes.len()];
        let mut stack = vec![(0usize, false)];
        while let Some((i, expanded)) = stack.pop() {
            if memo[i].is_some() {
                continue;
            }
            if self.terminal[i] {
                memo[i] = Some(0);
                continue;
            }
            let succ = self.choices[i].iter().flatten().map(|&(_, j)| j);
            if expanded {
                let step = u32::from(!(self.root_is_attempt && i == 0));
                let best = succ.map(|j| memo[j].expect("successor solved") + step).max().unwrap_or(0);
                memo[i] = Some(best);
            } else {
                stack.push((i, true));
                for j in succ {
                    if memo[j].is_none() {
                        stack.push((j, false));
                    }
                }
            }
        }
        memo[0].unwrap_or(0)
    }
}

/// Optimal initial value of the plain one-unit-step model.
pub fn oracle_value(system: &DistributionSystem, horizon: u32) -> Result<f64, OracleError> {
    Ok(Reference::explore(system)?.value(horizon))
}

/// Longest initial-to-terminal path of the plain model.
pub fn oracle_longest_horizon(system: &DistributionSystem) -> Result<u32, OracleError> {
    Ok(Reference::explore(system)?.longest())
}

/// Number of states of the plain model.
pub fn oracle_state_count(system: &DistributionSystem) -> Result<usize, OracleError> {
    Ok(Reference::explore(system)?.nodes.len())
}

/// A small random system, identical for identical arguments.
///
/// Buses form a random tree plus up to two extra branches. Travel times
/// come from random grid points, failure probabilities from
/// {0, 0.25, 0.5, 1}, and one or two buses are sources.
pub fn random_instance(seed: u64, max_buses: usize, max_teams: usize) -> DistributionSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_buses.max(1));
    let teams = rng.gen_range(1..=max_teams.max(1));

    let mut branches: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    if n >= 3 {
        for _ in 0..rng.gen_range(0..=2) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let key = (a.min(b), a.max(b));
            if a != b && !branches.iter().any(|&(x, y)| (x.min(y), x.max(y)) == key) {
                branches.push(key);
            }
        }
    }

    let mut grid: Vec<[f64; 2]> = (0..5)
        .flat_map(|x| (0..5).map(move |y| [f64::from(x), f64::from(y)]))
        .collect();
    grid.shuffle(&mut rng);
    let coords: Vec<[f64; 2]> = grid.into_iter().take(n).collect();
    let divisor = [1.0, 1.5, 2.0][rng.gen_range(0..3)];
    let travel = derive_travel_matrix(&coords, divisor).expect("grid points give a valid matrix");

    let pf = (0..n).map(|_| [0.0, 0.25, 0.5, 1.0][rng.gen_range(0..4)]).collect();
    let mut buses: Vec<usize> = (0..n).collect();
    buses.shuffle(&mut rng);
    let source_count = if n >= 2 { rng.gen_range(1..=2) } else { 1 };
    let sources: Vec<usize> = buses[..source_count].to_vec();
    let starts = (0..teams).map(|_| TeamStart::at(rng.gen_range(0..n))).collect();

    DistributionSystem::new(n, branches, sources, pf, travel, starts)
        .expect("generated instance is valid")
        .with_name(format!("random-{seed}"))
}
