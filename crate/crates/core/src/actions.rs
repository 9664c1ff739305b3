//! Team commands, feasible action sets and the elimination rules.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::energization::{beta, beta1, BusSet, BusStatusVector};
use crate::mdp_builder::TeamState;
use crate::system_model::DistributionSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TeamCommand {
    Wait,
    GoTo(usize),
    /// Keep travelling to the current destination (en-route teams only).
    Continue,
}

impl TeamCommand {
    /// External spelling: `W`, `C`, or the 1-based bus id.
    pub fn code(&self) -> String {
        match self {
            TeamCommand::Wait => "W".to_string(),
            TeamCommand::Continue => "C".to_string(),
            TeamCommand::GoTo(b) => (b + 1).to_string(),
        }
    }

    pub fn parse_code(code: &str) -> Option<Self> {
        match code.trim() {
            "W" | "w" => Some(TeamCommand::Wait),
            "C" | "c" => Some(TeamCommand::Continue),
            other => other
                .parse::<usize>()
                .ok()
                .filter(|&b| b >= 1)
                .map(|b| TeamCommand::GoTo(b - 1)),
        }
    }
}

/// One command per team, in the team order of the state it applies to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionVector(pub Vec<TeamCommand>);

impl ActionVector {
    pub fn all_wait(teams: usize) -> Self {
        Self(vec![TeamCommand::Wait; teams])
    }

    pub fn is_all_wait(&self) -> bool {
        self.0.iter().all(|c| *c == TeamCommand::Wait)
    }

    pub fn commands(&self) -> &[TeamCommand] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn codes(&self) -> Vec<String> {
        self.0.iter().map(TeamCommand::code).collect()
    }
}

impl fmt::Display for ActionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.codes().join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("non-terminal state {status} has no action satisfying the progress condition")]
    NoProgress { status: String },
}

fn commands_given_beta(teams: &[TeamState], team: usize, reachable: BusSet) -> Vec<TeamCommand> {
    let t = teams[team];
    if t.is_en_route() {
        return vec![TeamCommand::Continue];
    }
    let here = t.destination;
    let mut cmds = Vec::with_capacity(reachable.len() + 1);
    if reachable.contains(here) {
        cmds.push(TeamCommand::Wait);
    }
    cmds.extend(reachable.iter().filter(|&b| b != here).map(TeamCommand::GoTo));
    cmds
}

/// Commands available to one team: `Continue` while en route; otherwise a
/// trip to any bus in β other than the current one, plus `Wait` when the
/// current bus is itself in β.
pub fn feasible_commands(
    system: &DistributionSystem,
    s: &BusStatusVector,
    teams: &[TeamState],
    team: usize,
) -> Vec<TeamCommand> {
    commands_given_beta(teams, team, beta(system, s))
}

/// Whether `command` for `team` heads to a bus attemptable right now.
pub fn targets_set(command: TeamCommand, team: &TeamState, set: BusSet) -> bool {
    match command {
        TeamCommand::GoTo(b) => set.contains(b),
        TeamCommand::Continue => set.contains(team.destination),
        TeamCommand::Wait => false,
    }
}

/// The feasible action set in lexicographic command order.
///
/// A state whose β₁ is empty is terminal and gets the single all-`Wait`
/// action. Otherwise every combination of per-team commands in which at
/// least one team heads to a β₁ bus.
pub fn feasible_actions(
    system: &DistributionSystem,
    s: &BusStatusVector,
    teams: &[TeamState],
) -> Result<Vec<ActionVector>, ActionError> {
    let immediate = beta1(system, s);
    if immediate.is_empty() {
        return Ok(vec![ActionVector::all_wait(teams.len())]);
    }
    let reachable = beta(system, s);
    let per_team: Vec<Vec<TeamCommand>> = (0..teams.len())
        .map(|i| commands_given_beta(teams, i, reachable))
        .collect();
    let mut actions = Vec::new();
    if per_team.iter().any(Vec::is_empty) {
        return Err(ActionError::NoProgress { status: s.to_string() });
    }
    let mut cursor = vec![0usize; teams.len()];
    loop {
        let progress = cursor
            .iter()
            .enumerate()
            .any(|(i, &k)| targets_set(per_team[i][k], &teams[i], immediate));
        if progress {
            actions.push(ActionVector(
                cursor.iter().enumerate().map(|(i, &k)| per_team[i][k]).collect(),
            ));
        }
        // odometer, last team fastest
        let mut pos = teams.len();
        loop {
            if pos == 0 {
                if actions.is_empty() {
                    return Err(ActionError::NoProgress { status: s.to_string() });
                }
                return Ok(actions);
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < per_team[pos].len() {
                break;
            }
            cursor[pos] = 0;
        }
    }
}

/// Whether the trips of `action` contain a cycle of teams trading places,
/// i.e. some subset of travelling teams whose targets are exactly their
/// current buses.
pub fn has_exchange(teams: &[TeamState], action: &ActionVector) -> bool {
    let mut edges: Vec<(usize, usize)> = action
        .0
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match c {
            TeamCommand::GoTo(b) if !teams[i].is_en_route() => Some((teams[i].destination, *b)),
            _ => None,
        })
        .collect();
    if edges.len() < 2 {
        return false;
    }
    // Repeatedly drop trips that start at a bus nobody travels to; whatever
    // survives contains a directed cycle.
    loop {
        let before = edges.len();
        let targets: HashSet<usize> = edges.iter().map(|e| e.1).collect();
        edges.retain(|e| targets.contains(&e.0));
        let sources: HashSet<usize> = edges.iter().map(|e| e.0).collect();
        edges.retain(|e| sources.contains(&e.1));
        if edges.is_empty() {
            return false;
        }
        if edges.len() == before {
            return true;
        }
    }
}

/// Per-target arrival times, ordered by (bus, time).
fn arrival_profile(system: &DistributionSystem, teams: &[TeamState], action: &ActionVector) -> Vec<(usize, u32)> {
    let mut profile: Vec<(usize, u32)> = action
        .0
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match c {
            TeamCommand::GoTo(b) => Some((*b, system.time(teams[i].destination, *b))),
            _ => None,
        })
        .collect();
    profile.sort_unstable();
    profile
}

/// Which teams travel, what everyone else does, and the multiset of targets.
type CompatibilityKey = (Vec<Option<TeamCommand>>, Vec<usize>);

fn compatibility_key(action: &ActionVector) -> CompatibilityKey {
    let mut targets = Vec::new();
    let shape = action
        .0
        .iter()
        .map(|c| match c {
            TeamCommand::GoTo(b) => {
                targets.push(*b);
                None
            }
            other => Some(*other),
        })
        .collect();
    targets.sort_unstable();
    (shape, targets)
}

/// Removes dominated permutations and team exchanges.
///
/// Actions that send the same teams to the same targets (everyone else
/// unchanged) are compatible. Within a compatibility class an action goes
/// when another member reaches every target no later; among members with
/// identical arrival times the lexicographically smallest stays. Actions in
/// which some travelling teams only trade places are dropped as well.
pub fn eliminate_permutations(
    system: &DistributionSystem,
    teams: &[TeamState],
    actions: Vec<ActionVector>,
) -> Vec<ActionVector> {
    let candidates: Vec<ActionVector> = actions
        .into_iter()
        .filter(|a| !has_exchange(teams, a))
        .collect();
    let mut classes: HashMap<CompatibilityKey, Vec<usize>> = HashMap::new();
    for (idx, a) in candidates.iter().enumerate() {
        if a.0.iter().filter(|c| matches!(c, TeamCommand::GoTo(_))).count() >= 2 {
            classes.entry(compatibility_key(a)).or_default().push(idx);
        }
    }
    let mut removed = vec![false; candidates.len()];
    for members in classes.values() {
        if members.len() < 2 {
            continue;
        }
        let profiles: Vec<Vec<(usize, u32)>> = members
            .iter()
            .map(|&m| arrival_profile(system, teams, &candidates[m]))
            .collect();
        for (x, &mx) in members.iter().enumerate() {
            let beaten = members.iter().enumerate().any(|(y, &my)| {
                if x == y {
                    return false;
                }
                let no_later = profiles[y]
                    .iter()
                    .zip(&profiles[x])
                    .all(|(py, px)| py.1 <= px.1);
                no_later && (profiles[y] != profiles[x] || my < mx)
            });
            if beaten {
                removed[mx] = true;
            }
        }
    }
    candidates
        .into_iter()
        .zip(removed)
        .filter_map(|(a, r)| (!r).then_some(a))
        .collect()
}

/// Removes trips that pass straight through another available target.
///
/// An action sending an at-bus team from `p` to `b` goes when the same
/// action with that team sent to `c` instead is also present and
/// `time(p,b) = time(p,c) + time(c,b)`.
///
/// The stop `c` must be attemptable right now. A stop that is merely
/// reachable gives no attempt on arrival, and while the team heads there
/// the other teams may be forced to move to satisfy the progress condition,
/// which can cost more than the direct trip. It would also clash with the
/// waiting rule, which parks a team at such a stop.
pub fn eliminate_on_the_way(
    system: &DistributionSystem,
    s: &BusStatusVector,
    teams: &[TeamState],
    actions: Vec<ActionVector>,
) -> Vec<ActionVector> {
    let stops = beta1(system, s);
    let present: HashSet<&ActionVector> = actions.iter().collect();
    let keep: Vec<bool> = actions
        .iter()
        .map(|a| {
            !a.0.iter().enumerate().any(|(x, cmd)| {
                let TeamCommand::GoTo(target) = *cmd else {
                    return false;
                };
                let here = teams[x].destination;
                let direct = system.time(here, target);
                stops.iter().any(|stop| {
                    if stop == target || stop == here {
                        return false;
                    }
                    if system.time(here, stop) + system.time(stop, target) != direct {
                        return false;
                    }
                    let mut alt = a.clone();
                    alt.0[x] = TeamCommand::GoTo(stop);
                    present.contains(&alt)
                })
            })
        })
        .collect();
    actions
        .into_iter()
        .zip(keep)
        .filter_map(|(a, k)| k.then_some(a))
        .collect()
}
