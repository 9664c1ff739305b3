//! Explicit construction of the restoration MDP by frontier exploration.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{
    eliminate_on_the_way, eliminate_permutations, feasible_actions, ActionError, ActionVector,
    TeamCommand,
};
use crate::energization::{alpha, beta1, cost, enumerate_outcomes, BusSet, BusStatusVector};
use crate::flags::OptFlags;
use crate::system_model::{DistributionSystem, MAX_MODEL_BUSES};

pub const DEFAULT_STATE_CAP: usize = 50_000_000;

/// Where a team is heading and how long until it gets there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TeamState {
    pub destination: usize,
    pub remaining: u32,
}

impl TeamState {
    pub fn at(bus: usize) -> Self {
        Self { destination: bus, remaining: 0 }
    }

    pub fn is_en_route(&self) -> bool {
        self.remaining > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MdpState {
    pub status: BusStatusVector,
    pub teams: Vec<TeamState>,
}

impl MdpState {
    pub fn positions(&self) -> BusSet {
        at_bus_positions(&self.teams)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub target: u32,
    pub probability: f64,
    pub duration: u32,
    /// Cost of the source state per time unit.
    pub cost_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error(
        "state cap of {cap} exceeded ({states} states interned, {frontier} still unexpanded); \
         consider solving partitions of the system"
    )]
    StateCap { cap: usize, states: usize, frontier: usize },
    #[error("the MDP layer supports at most {max} buses, the system has {buses}")]
    TooManyBuses { buses: usize, max: usize },
    #[error("construction cancelled")]
    Cancelled,
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("model invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub state_cap: usize,
    /// Updated with the number of interned states while building.
    pub progress: Option<Arc<AtomicUsize>>,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { state_cap: DEFAULT_STATE_CAP, progress: None, cancel: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildMetadata {
    pub flags: String,
    pub states: usize,
    pub actions: usize,
    pub transitions: usize,
    pub terminal_states: usize,
    pub build_seconds: f64,
    /// 3^N * (N * max travel time)^F, for reference only.
    pub theoretical_bound: f64,
    pub memory_estimate_bytes: usize,
}

/// A built model. State 0 is the initial state.
#[derive(Debug, Clone)]
pub struct Mdp {
    bus_count: usize,
    team_count: usize,
    flags: OptFlags,
    states: IndexSet<MdpState>,
    action_offsets: Vec<usize>,
    commands: Vec<TeamCommand>,
    transition_offsets: Vec<usize>,
    transitions: Vec<Transition>,
    terminal: Vec<bool>,
    virtual_root: bool,
    root_order: Vec<usize>,
    metadata: BuildMetadata,
}

fn at_bus_positions(teams: &[TeamState]) -> BusSet {
    teams.iter().filter(|t| !t.is_en_route()).map(|t| t.destination).collect()
}

/// Stable argsort of team states: slot `k` of the canonical vector holds
/// the team at index `order[k]` of the input.
pub fn canonical_order(teams: &[TeamState]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..teams.len()).collect();
    order.sort_by_key(|&i| teams[i]);
    order
}

fn remaining_for(system: &DistributionSystem, team: &TeamState, command: TeamCommand) -> Option<u32> {
    match command {
        TeamCommand::Wait => None,
        TeamCommand::GoTo(b) => Some(system.time(team.destination, b)),
        TeamCommand::Continue => Some(team.remaining),
    }
}

/// Moves every non-waiting team `dt` units towards its target. A team that
/// would overshoot stops at the target.
pub fn advance_teams(
    system: &DistributionSystem,
    teams: &[TeamState],
    action: &ActionVector,
    dt: u32,
) -> Vec<TeamState> {
    teams
        .iter()
        .zip(action.commands())
        .map(|(t, &c)| match c {
            TeamCommand::Wait => *t,
            TeamCommand::GoTo(b) => TeamState {
                destination: b,
                remaining: system.time(t.destination, b).saturating_sub(dt),
            },
            TeamCommand::Continue => TeamState {
                destination: t.destination,
                remaining: t.remaining.saturating_sub(dt),
            },
        })
        .collect()
}

/// Time units covered by one transition.
///
/// Without fusion every step lasts one unit. With fusion the step lasts
/// until the first moving team arrives. With waiting enabled, teams that
/// start a trip to a bus that cannot be attempted yet do not end the step;
/// they wait at their target. Teams already en route still do, since they
/// had no chance to pick a better target in this state.
pub fn transition_duration(
    system: &DistributionSystem,
    s: &BusStatusVector,
    teams: &[TeamState],
    action: &ActionVector,
    flags: OptFlags,
) -> u32 {
    let flags = flags.normalized();
    if !flags.fuse_travel || action.is_all_wait() {
        return 1;
    }
    let attemptable = if flags.wait_for_attempt { beta1(system, s) } else { BusSet::EMPTY };
    teams
        .iter()
        .zip(action.commands())
        .filter(|(t, &c)| {
            !flags.wait_for_attempt
                || c == TeamCommand::Continue
                || crate::actions::targets_set(c, t, attemptable)
        })
        .filter_map(|(t, &c)| remaining_for(system, t, c))
        .min()
        .unwrap_or(1)
        .max(1)
}

/// A successor before interning.
#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub state: MdpState,
    pub probability: f64,
    pub duration: u32,
    pub cost_rate: u32,
}

/// Successor distribution of taking `action` in `state`.
pub fn successors(
    system: &DistributionSystem,
    state: &MdpState,
    action: &ActionVector,
    flags: OptFlags,
) -> Vec<Successor> {
    let rate = cost(&state.status);
    if beta1(system, &state.status).is_empty() {
        return vec![Successor { state: state.clone(), probability: 1.0, duration: 1, cost_rate: rate }];
    }
    let dt = transition_duration(system, &state.status, &state.teams, action, flags);
    let mut teams = advance_teams(system, &state.teams, action, dt);
    if flags.merge_team_permutations {
        teams.sort();
    }
    let positions = at_bus_positions(&teams);
    enumerate_outcomes(system, &state.status, positions)
        .iter()
        .map(|o| Successor {
            state: MdpState { status: o.status, teams: teams.clone() },
            probability: o.probability,
            duration: dt,
            cost_rate: rate,
        })
        .collect()
}

/// The action list a builder with `flags` assigns to a non-root state.
pub fn reduced_actions(
    system: &DistributionSystem,
    state: &MdpState,
    flags: OptFlags,
) -> Result<Vec<ActionVector>, ActionError> {
    let mut actions = feasible_actions(system, &state.status, &state.teams)?;
    if beta1(system, &state.status).is_empty() {
        return Ok(actions);
    }
    if flags.prune_permutations {
        actions = eliminate_permutations(system, &state.teams, actions);
    }
    if flags.prune_on_the_way {
        actions = eliminate_on_the_way(system, &state.status, &state.teams, actions);
    }
    Ok(actions)
}

fn initial_teams(system: &DistributionSystem) -> Vec<TeamState> {
    system
        .teams()
        .iter()
        .map(|t| TeamState { destination: t.bus, remaining: t.remaining })
        .collect()
}

pub fn build(system: &DistributionSystem, flags: OptFlags) -> Result<Mdp, BuildError> {
    build_with(system, flags, &BuildOptions::default())
}

pub fn build_with(
    system: &DistributionSystem,
    flags: OptFlags,
    options: &BuildOptions,
) -> Result<Mdp, BuildError> {
    let flags = flags.normalized();
    if !system.fits_model() {
        return Err(BuildError::TooManyBuses { buses: system.bus_count(), max: MAX_MODEL_BUSES });
    }
    let started = Instant::now();
    let physical = initial_teams(system);
    let root_order = if flags.merge_team_permutations {
        canonical_order(&physical)
    } else {
        (0..physical.len()).collect()
    };
    let root = MdpState {
        status: system.initial_status_vector(),
        teams: root_order.iter().map(|&i| physical[i]).collect(),
    };
    let virtual_root = !alpha(system, &root.status, root.positions()).is_empty();

    let mut mdp = Mdp {
        bus_count: system.bus_count(),
        team_count: system.team_count(),
        flags,
        states: IndexSet::new(),
        action_offsets: vec![0],
        commands: Vec::new(),
        transition_offsets: vec![0],
        transitions: Vec::new(),
        terminal: Vec::new(),
        virtual_root,
        root_order,
        metadata: BuildMetadata {
            flags: flags.label(),
            states: 0,
            actions: 0,
            transitions: 0,
            terminal_states: 0,
            build_seconds: 0.0,
            theoretical_bound: theoretical_bound(system),
            memory_estimate_bytes: 0,
        },
    };
    mdp.states.insert(root);

    let mut next = 0usize;
    let mut pending: VecDeque<Successor> = VecDeque::new();
    while next < mdp.states.len() {
        if let Some(cancel) = &options.cancel {
            if cancel.load(Ordering::Relaxed) {
                return Err(BuildError::Cancelled);
            }
        }
        let state = mdp.states[next].clone();
        let terminal = beta1(system, &state.status).is_empty();
        mdp.terminal.push(terminal);

        let actions = if next == 0 && virtual_root {
            vec![ActionVector::all_wait(state.teams.len())]
        } else {
            reduced_actions(system, &state, flags)?
        };
        for action in &actions {
            pending.clear();
            if next == 0 && virtual_root {
                for o in enumerate_outcomes(system, &state.status, state.positions()).iter() {
                    pending.push_back(Successor {
                        state: MdpState { status: o.status, teams: state.teams.clone() },
                        probability: o.probability,
                        duration: 0,
                        cost_rate: 0,
                    });
                }
            } else {
                pending.extend(successors(system, &state, action, flags));
            }
            for succ in pending.drain(..) {
                let (target, _) = mdp.states.insert_full(succ.state);
                mdp.transitions.push(Transition {
                    target: target as u32,
                    probability: succ.probability,
                    duration: succ.duration,
                    cost_rate: succ.cost_rate,
                });
            }
            mdp.commands.extend_from_slice(action.commands());
            mdp.transition_offsets.push(mdp.transitions.len());
        }
        mdp.action_offsets.push(mdp.transition_offsets.len() - 1);
        next += 1;

        if mdp.states.len() > options.state_cap {
            return Err(BuildError::StateCap {
                cap: options.state_cap,
                states: mdp.states.len(),
                frontier: mdp.states.len() - next,
            });
        }
        if let Some(progress) = &options.progress {
            if next.is_multiple_of(1024) {
                progress.store(mdp.states.len(), Ordering::Relaxed);
            }
        }
    }
    if let Some(progress) = &options.progress {
        progress.store(mdp.states.len(), Ordering::Relaxed);
    }

    mdp.metadata.states = mdp.states.len();
    mdp.metadata.actions = mdp.transition_offsets.len() - 1;
    mdp.metadata.transitions = mdp.transitions.len();
    mdp.metadata.terminal_states = mdp.terminal.iter().filter(|&&t| t).count();
    mdp.metadata.build_seconds = started.elapsed().as_secs_f64();
    mdp.metadata.memory_estimate_bytes = mdp.memory_estimate();
    Ok(mdp)
}

fn theoretical_bound(system: &DistributionSystem) -> f64 {
    let n = system.bus_count() as f64;
    let positions = n * f64::from(system.travel().max_time().max(1));
    3f64.powf(n) * positions.powi(system.team_count() as i32)
}

impl Mdp {
    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    pub fn team_count(&self) -> usize {
        self.team_count
    }

    pub fn flags(&self) -> OptFlags {
        self.flags
    }

    pub fn metadata(&self) -> &BuildMetadata {
        &self.metadata
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, index: usize) -> &MdpState {
        &self.states[index]
    }

    pub fn index_of(&self, state: &MdpState) -> Option<usize> {
        self.states.get_index_of(state)
    }

    pub fn states(&self) -> impl Iterator<Item = &MdpState> {
        self.states.iter()
    }

    pub fn is_terminal(&self, index: usize) -> bool {
        self.terminal[index]
    }

    /// Whether state 0 is the zero-duration attempt at the start positions.
    pub fn has_virtual_root(&self) -> bool {
        self.virtual_root
    }

    /// For each canonical slot of the initial state, the physical team index.
    pub fn root_team_order(&self) -> &[usize] {
        &self.root_order
    }

    pub fn action_count(&self, state: usize) -> usize {
        self.action_offsets[state + 1] - self.action_offsets[state]
    }

    fn global_action(&self, state: usize, action: usize) -> usize {
        debug_assert!(action < self.action_count(state));
        self.action_offsets[state] + action
    }

    pub fn action_commands(&self, state: usize, action: usize) -> &[TeamCommand] {
        let g = self.global_action(state, action);
        &self.commands[g * self.team_count..(g + 1) * self.team_count]
    }

    pub fn action(&self, state: usize, action: usize) -> ActionVector {
        ActionVector(self.action_commands(state, action).to_vec())
    }

    pub fn transitions(&self, state: usize, action: usize) -> &[Transition] {
        let g = self.global_action(state, action);
        &self.transitions[self.transition_offsets[g]..self.transition_offsets[g + 1]]
    }

    pub fn total_actions(&self) -> usize {
        self.transition_offsets.len() - 1
    }

    pub fn total_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn max_duration(&self) -> u32 {
        self.transitions.iter().map(|t| t.duration).max().unwrap_or(1)
    }

    fn memory_estimate(&self) -> usize {
        use std::mem::size_of;
        self.states.len()
            * (size_of::<MdpState>() + self.team_count * size_of::<TeamState>() + 2 * size_of::<usize>() + 1)
            + self.commands.len() * size_of::<TeamCommand>()
            + self.transition_offsets.len() * size_of::<usize>()
            + self.transitions.len() * size_of::<Transition>()
    }

    /// Successor edges that are not terminal self-loops.
    fn edges(&self, state: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        (0..self.action_count(state)).flat_map(move |a| {
            self.transitions(state, a)
                .iter()
                .filter(move |t| !(self.terminal[state] && t.target as usize == state))
                .map(|t| (t.target as usize, t.duration))
        })
    }

    /// States in an order where every state precedes its successors.
    pub fn topological_order(&self) -> Result<Vec<usize>, BuildError> {
        let n = self.states.len();
        let mut indegree = vec![0u32; n];
        for s in 0..n {
            for (t, _) in self.edges(s) {
                indegree[t] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&s| indegree[s] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for (t, _) in self.edges(s) {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push_back(t);
                }
            }
        }
        if order.len() != n {
            return Err(BuildError::Invariant(format!(
                "transition graph has a cycle through {} states",
                n - order.len()
            )));
        }
        Ok(order)
    }

    /// Largest total duration along any path from the initial state to a
    /// terminal state.
    pub fn longest_horizon(&self) -> Result<u32, BuildError> {
        let order = self.topological_order()?;
        let mut dist = vec![0u32; self.states.len()];
        let mut longest = 0;
        for s in order {
            if self.terminal[s] {
                longest = longest.max(dist[s]);
            }
            for (t, d) in self.edges(s) {
                dist[t] = dist[t].max(dist[s] + d);
            }
        }
        Ok(longest)
    }

    /// Checks the structural contracts of a built model and lists every
    /// violation found.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for s in 0..self.states.len() {
            let count = self.action_count(s);
            if count == 0 {
                problems.push(format!("state {s} has no actions"));
            }
            for a in 0..count {
                let total: f64 = self.transitions(s, a).iter().map(|t| t.probability).sum();
                if (total - 1.0).abs() > 1e-12 {
                    problems.push(format!("state {s} action {a}: probabilities sum to {total}"));
                }
                for t in self.transitions(s, a) {
                    if !(t.probability > 0.0 && t.probability <= 1.0) {
                        problems.push(format!("state {s} action {a}: probability {}", t.probability));
                    }
                    let root_action = s == 0 && self.virtual_root;
                    if t.duration == 0 && !root_action {
                        problems.push(format!("state {s} action {a}: zero duration"));
                    }
                }
            }
            if self.terminal[s] {
                let ok = count == 1
                    && self.action(s, 0).is_all_wait()
                    && matches!(self.transitions(s, 0), [t] if t.target as usize == s
                        && t.probability == 1.0
                        && t.duration == 1
                        && t.cost_rate == cost(&self.states[s].status));
                if !ok {
                    problems.push(format!("terminal state {s} breaks the self-loop contract"));
                }
            }
            let teams = &self.states[s].teams;
            if self.flags.merge_team_permutations && teams.windows(2).any(|w| w[0] > w[1]) {
                problems.push(format!("state {s} team part is not canonical"));
            }
            if self.flags.fuse_travel && s != 0 && !self.terminal[s] && self.is_continue_only(s) {
                problems.push(format!("state {s} only has the continue action"));
            }
        }
        if let Err(e) = self.topological_order() {
            problems.push(e.to_string());
        }
        problems
    }

    /// Whether the only action of `state` is every team continuing.
    pub fn is_continue_only(&self, state: usize) -> bool {
        self.action_count(state) == 1
            && self.action_commands(state, 0).iter().all(|c| *c == TeamCommand::Continue)
    }

    pub fn to_export(&self) -> MdpExport {
        let states = (0..self.states.len())
            .map(|s| {
                let st = &self.states[s];
                let actions = (0..self.action_count(s))
                    .map(|a| ExportAction {
                        commands: self.action(s, a).codes(),
                        transitions: self
                            .transitions(s, a)
                            .iter()
                            .map(|t| ExportTransition {
                                target: t.target as usize,
                                probability: t.probability,
                                duration: t.duration,
                                cost_rate: t.cost_rate,
                            })
                            .collect(),
                    })
                    .collect();
                ExportState {
                    index: s,
                    status: st.status.to_string(),
                    teams: st
                        .teams
                        .iter()
                        .map(|t| ExportTeam { destination: t.destination + 1, remaining: t.remaining })
                        .collect(),
                    terminal: self.terminal[s],
                    actions,
                }
            })
            .collect();
        MdpExport {
            metadata: self.metadata.clone(),
            virtual_root: self.virtual_root,
            states,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MdpExport {
    pub metadata: BuildMetadata,
    pub virtual_root: bool,
    pub states: Vec<ExportState>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportState {
    pub index: usize,
    pub status: String,
    pub teams: Vec<ExportTeam>,
    pub terminal: bool,
    pub actions: Vec<ExportAction>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportTeam {
    pub destination: usize,
    pub remaining: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportAction {
    pub commands: Vec<String>,
    pub transitions: Vec<ExportTransition>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportTransition {
    pub target: usize,
    pub probability: f64,
    pub duration: u32,
    pub cost_rate: u32,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energization::BusStatus;
    use crate::system_model::{derive_travel_matrix, TeamStart, TravelTimeMatrix};
    use TeamCommand::{Continue, GoTo, Wait};

    fn six_bus(teams: Vec<TeamStart>) -> DistributionSystem {
        let coords = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]];
        DistributionSystem::new(
            6,
            [(0, 1), (1, 2), (3, 4), (4, 5)],
            [0, 3],
            vec![0.5, 0.5, 0.25, 0.25, 0.25, 0.25],
            derive_travel_matrix(&coords, 1.0).unwrap(),
            teams,
        )
        .unwrap()
    }

    fn v(text: &str) -> BusStatusVector {
        BusStatusVector::from_letters(text).unwrap()
    }

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
    fn advance_examples() {
        let sys = six_bus(vec![TeamStart::at(0)]);
        let teams = [TeamState { destination: 0, remaining: 0 }, TeamState { destination: 2, remaining: 1 }];
        let moved = advance_teams(&sys, &teams, &ActionVector(vec![GoTo(1), Continue]), 1);
        assert_eq!(moved, vec![TeamState::at(1), TeamState::at(2)]);
        let same = advance_teams(&sys, &teams, &ActionVector(vec![Wait, Wait]), 1);
        assert_eq!(same, teams.to_vec());
        let one = [TeamState { destination: 4, remaining: 3 }];
        let moved = advance_teams(&sys, &one, &ActionVector(vec![Continue]), 2);
        assert_eq!(moved, vec![TeamState { destination: 4, remaining: 1 }]);
    }

    fn line_with_times(rows: Vec<Vec<u32>>) -> DistributionSystem {
        let n = rows.len();
        DistributionSystem::new(
            n,
            (0..n - 1).map(|i| (i, i + 1)),
            [0],
            vec![0.5; n],
            TravelTimeMatrix::from_rows(rows).unwrap(),
            vec![TeamStart::at(0), TeamStart::at(0)],
        )
        .unwrap()
    }

    #[test]
    fn duration_rules() {
        let sys = line_with_times(vec![
            vec![0, 3, 5, 2],
            vec![3, 0, 2, 4],
            vec![5, 2, 0, 3],
            vec![2, 4, 3, 0],
        ]);
        let s = v("EUUU");
        let teams = [TeamState::at(0), TeamState::at(0)];
        let both = ActionVector(vec![GoTo(1), GoTo(2)]);
        let fused = OptFlags::parse("V").unwrap();
        assert_eq!(transition_duration(&sys, &s, &teams, &both, fused), 3);
        assert_eq!(transition_duration(&sys, &s, &teams, &both, OptFlags::NONE), 1);
        // Bus 4 (time 2) cannot be attempted yet, bus 2 (time 3) can.
        let mixed = ActionVector(vec![GoTo(3), GoTo(1)]);
        assert_eq!(transition_duration(&sys, &s, &teams, &mixed, fused), 2);
        let wait = OptFlags::parse("W").unwrap();
        assert_eq!(transition_duration(&sys, &s, &teams, &mixed, wait), 3);
        let idle = ActionVector(vec![Wait, Wait]);
        assert_eq!(transition_duration(&sys, &s, &teams, &idle, wait), 1);
    }

    #[test]
    fn midway_state_successors() {
        let sys = six_bus(vec![TeamStart::at(0)]);
        let state = MdpState {
            status: v("EUUEDU"),
            teams: vec![TeamState::at(0), TeamState { destination: 2, remaining: 1 }],
        };
        let succ = successors(&sys, &state, &ActionVector(vec![GoTo(1), Continue]), OptFlags::NONE);
        assert_eq!(succ.len(), 3);
        let find = |txt: &str| succ.iter().find(|x| x.state.status == v(txt)).unwrap().probability;
        assert!((find("EDUEDU") - 0.5).abs() < 1e-12);
        assert!((find("EEEEDU") - 0.375).abs() < 1e-12);
        assert!((find("EEDEDU") - 0.125).abs() < 1e-12);
        assert!(succ.iter().all(|x| x.duration == 1 && x.cost_rate == 4));
    }

    #[test]
    fn terminal_successor_is_self_loop() {
        let sys = six_bus(vec![TeamStart::at(0)]);
        let state = MdpState { status: v("EEEEDU"), teams: vec![TeamState::at(1), TeamState::at(2)] };
        let succ = successors(&sys, &state, &ActionVector(vec![Wait, Wait]), OptFlags::ALL);
        assert_eq!(succ, vec![Successor { state, probability: 1.0, duration: 1, cost_rate: 2 }]);
    }

    #[test]
    fn travel_is_fused_into_one_transition() {
        // 1 - 2 - 3 line, buses 1 and 2 already energized, bus 3 five units away.
        let rows = vec![vec![0, 2, 5], vec![2, 0, 3], vec![5, 3, 0]];
        let sys = DistributionSystem::new(
            3,
            [(0, 1), (1, 2)],
            [0],
            vec![0.0, 0.0, 0.0],
            TravelTimeMatrix::from_rows(rows).unwrap(),
            vec![TeamStart::at(0)],
        )
        .unwrap()
        .with_initial_status(vec![BusStatus::Energized, BusStatus::Energized, BusStatus::Unknown])
        .unwrap();
        let fused = build(&sys, OptFlags::parse("V").unwrap()).unwrap();
        let go = (0..fused.action_count(0))
            .find(|&a| fused.action_commands(0, a) == [GoTo(2)])
            .unwrap();
        assert_eq!(fused.transitions(0, go)[0].duration, 5);
        let naive = build(&sys, OptFlags::NONE).unwrap();
        assert!(naive.state_count() > fused.state_count());
        assert_eq!(naive.longest_horizon().unwrap(), fused.longest_horizon().unwrap());
    }

    #[test]
    fn virtual_root_branches_on_start_bus() {
        let sys = six_bus(vec![TeamStart::at(0)]);
        let mdp = build(&sys, OptFlags::NONE).unwrap();
        assert!(mdp.has_virtual_root());
        assert_eq!(mdp.action_count(0), 1);
        let t = mdp.transitions(0, 0);
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|x| x.duration == 0 && x.cost_rate == 0 && x.probability == 0.5));
    }

    #[test]
    fn single_bus_has_three_states() {
        let mdp = build(&single_bus(0.25), OptFlags::NONE).unwrap();
        assert_eq!(mdp.state_count(), 3);
        assert_eq!(mdp.longest_horizon().unwrap(), 0);
        assert!(mdp.check_invariants().is_empty());
    }

    #[test]
    fn two_bus_line_horizon() {
        for flags in ["", "V", "SPOW"] {
            let mdp = build(&two_bus_line(), OptFlags::parse(flags).unwrap()).unwrap();
            assert_eq!(mdp.longest_horizon().unwrap(), 1, "flags {flags}");
            assert!(mdp.check_invariants().is_empty());
        }
    }

    #[test]
    fn merged_permutations_ignore_start_order() {
        let a = build(&six_bus(vec![TeamStart::at(2), TeamStart::at(3)]), OptFlags::parse("S").unwrap()).unwrap();
        let b = build(&six_bus(vec![TeamStart::at(3), TeamStart::at(2)]), OptFlags::parse("S").unwrap()).unwrap();
        assert_eq!(a.state_count(), b.state_count());
        assert!(a.states().zip(b.states()).all(|(x, y)| x == y));
        assert_eq!(b.root_team_order(), &[1, 0]);
    }

    #[test]
    fn state_cap_is_reported() {
        let sys = six_bus(vec![TeamStart::at(0), TeamStart::at(3)]);
        let err = build_with(&sys, OptFlags::NONE, &BuildOptions { state_cap: 5, ..Default::default() })
            .unwrap_err();
        assert!(matches!(err, BuildError::StateCap { cap: 5, .. }));
    }

    #[test]
    fn invariants_hold_for_all_subsets() {
        let sys = six_bus(vec![TeamStart::at(0), TeamStart::at(3)]);
        let naive = build(&sys, OptFlags::NONE).unwrap().state_count();
        for flags in OptFlags::benchmark_subsets() {
            let mdp = build(&sys, flags).unwrap();
            assert_eq!(mdp.check_invariants(), Vec::<String>::new(), "flags {flags}");
            assert!(mdp.state_count() <= naive, "flags {flags}");
        }
    }
}
