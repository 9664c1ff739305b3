//! Following a solved policy while field outcomes are reported.
//!
//! Model states may hold teams in canonical (sorted) order. The executor
//! keeps the mapping from each model slot to the physical team so commands
//! are always reported per physical team.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::actions::TeamCommand;
use crate::energization::{BusStatus, BusStatusVector};
use crate::mdp_builder::{advance_teams, canonical_order, Mdp, TeamState};
use crate::solver::{what_if, PolicyTable, SolveError};
use crate::system_model::DistributionSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("the current state is terminal; nothing left to report")]
    Terminal,
    #[error("bus {0} does not exist")]
    UnknownBus(usize),
    #[error("reported outcome {reported} is not a possible result of the current action")]
    NoMatch { reported: String },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// A system together with its built model and solved policy.
#[derive(Debug, Clone)]
pub struct Plan {
    pub system: Arc<DistributionSystem>,
    pub mdp: Arc<Mdp>,
    pub policy: Arc<PolicyTable>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryEntry {
    pub state: usize,
    pub action: usize,
    /// Per physical team.
    pub commands: Vec<String>,
    /// Reported status changes as (1-based bus, status).
    pub changes: Vec<(usize, BusStatus)>,
    pub next_state: usize,
    pub duration: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecutionState {
    pub state: usize,
    /// `slots[k]` is the physical team held by model slot `k`.
    pub slots: Vec<usize>,
    pub elapsed: u32,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionOption {
    pub index: usize,
    pub commands: Vec<String>,
    pub expected_cost: f64,
    pub chosen: bool,
}

impl Plan {
    pub fn new(system: DistributionSystem, mdp: Mdp, policy: PolicyTable) -> Self {
        Self { system: Arc::new(system), mdp: Arc::new(mdp), policy: Arc::new(policy) }
    }

    pub fn start(&self) -> ExecutionState {
        ExecutionState {
            state: 0,
            slots: self.mdp.root_team_order().to_vec(),
            elapsed: 0,
            history: Vec::new(),
        }
    }

    /// Starts at an arbitrary model state with the given slot mapping.
    pub fn start_at(&self, state: usize, slots: Vec<usize>) -> ExecutionState {
        ExecutionState { state, slots, elapsed: 0, history: Vec::new() }
    }

    pub fn status(&self, exec: &ExecutionState) -> BusStatusVector {
        self.mdp.state(exec.state).status
    }

    /// Team states per physical team.
    pub fn physical_teams(&self, exec: &ExecutionState) -> Vec<TeamState> {
        self.to_physical(exec, &self.mdp.state(exec.state).teams)
    }

    fn to_physical<T: Clone>(&self, exec: &ExecutionState, slotted: &[T]) -> Vec<T> {
        let mut out = slotted.to_vec();
        for (slot, &team) in exec.slots.iter().enumerate() {
            out[team] = slotted[slot].clone();
        }
        out
    }

    pub fn is_terminal(&self, exec: &ExecutionState) -> bool {
        self.mdp.is_terminal(exec.state)
    }

    pub fn recommended_action(&self, exec: &ExecutionState) -> usize {
        self.policy.chosen_action(exec.state)
    }

    /// Commands of `action` per physical team.
    pub fn commands(&self, exec: &ExecutionState, action: usize) -> Vec<TeamCommand> {
        self.to_physical(exec, self.mdp.action_commands(exec.state, action))
    }

    /// Buses whose status may change when `action` is carried out.
    pub fn pending_buses(&self, exec: &ExecutionState, action: usize) -> Vec<usize> {
        let here = self.status(exec);
        let mut buses: Vec<usize> = self
            .mdp
            .transitions(exec.state, action)
            .iter()
            .flat_map(|t| here.changes_to(&self.mdp.state(t.target as usize).status))
            .map(|(b, _)| b)
            .collect();
        buses.sort_unstable();
        buses.dedup();
        buses
    }

    /// Every action of the current state with its expected cost.
    pub fn options(&self, exec: &ExecutionState) -> Result<Vec<ActionOption>, ExecError> {
        let chosen = self.recommended_action(exec);
        (0..self.mdp.action_count(exec.state))
            .map(|a| {
                Ok(ActionOption {
                    index: a,
                    commands: self.commands(exec, a).iter().map(TeamCommand::code).collect(),
                    expected_cost: what_if(&self.policy, &self.mdp, exec.state, a)?,
                    chosen: a == chosen,
                })
            })
            .collect()
    }

    /// Applies reported outcomes (0-based bus, status) of the recommended
    /// action.
    pub fn report(&self, exec: &mut ExecutionState, outcomes: &[(usize, BusStatus)]) -> Result<usize, ExecError> {
        let action = self.recommended_action(exec);
        self.report_action(exec, action, outcomes)
    }

    /// Applies reported outcomes of `action`, which need not be the
    /// recommended one.
    pub fn report_action(
        &self,
        exec: &mut ExecutionState,
        action: usize,
        outcomes: &[(usize, BusStatus)],
    ) -> Result<usize, ExecError> {
        if self.is_terminal(exec) {
            return Err(ExecError::Terminal);
        }
        let count = self.mdp.action_count(exec.state);
        if action >= count {
            return Err(SolveError::BadAction { state: exec.state, action, count }.into());
        }
        let current = self.mdp.state(exec.state);
        let mut reported = current.status;
        for &(bus, status) in outcomes {
            if bus >= reported.len() {
                return Err(ExecError::UnknownBus(bus + 1));
            }
            reported = reported.with(bus, status);
        }
        let transition = self
            .mdp
            .transitions(exec.state, action)
            .iter()
            .find(|t| self.mdp.state(t.target as usize).status == reported)
            .copied()
            .ok_or_else(|| ExecError::NoMatch { reported: reported.to_string() })?;

        let act = self.mdp.action(exec.state, action);
        if self.mdp.flags().merge_team_permutations {
            let moved = advance_teams(&self.system, &current.teams, &act, transition.duration);
            let order = canonical_order(&moved);
            exec.slots = order.iter().map(|&k| exec.slots[k]).collect();
        }
        let next = transition.target as usize;
        exec.history.push(HistoryEntry {
            state: exec.state,
            action,
            commands: self.commands(exec, action).iter().map(TeamCommand::code).collect(),
            changes: current
                .status
                .changes_to(&reported)
                .into_iter()
                .map(|(b, s)| (b + 1, s))
                .collect(),
            next_state: next,
            duration: transition.duration,
        });
        exec.state = next;
        exec.elapsed += transition.duration;
        Ok(next)
    }
}
