//! Execution sessions: follow the policy while the field reports outcomes.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use restoration_core::energization::cost;
use restoration_core::executor::{ActionOption, ExecError, ExecutionState, Plan};
use restoration_core::{BusStatus, TeamCommand};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::problems::solved_plan;
use crate::{lock, AppState};

/// What-if alternatives listed in a session view.
const LISTED_ALTERNATIVES: usize = 5;

pub(crate) struct Session {
    problem_id: String,
    policy_version: u32,
    plan: Arc<Plan>,
    exec: ExecutionState,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TeamView {
    pub team: usize,
    /// Bus the team stands at or travels to.
    pub bus: usize,
    pub remaining: u32,
    pub en_route: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CommandView {
    pub team: usize,
    /// `"W"`, `"C"` or a 1-based target bus.
    pub command: String,
    /// Bus the team will be heading to or standing at.
    pub target: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BusChange {
    pub bus: usize,
    pub status: BusStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepDelta {
    pub changes: Vec<BusChange>,
    pub duration: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CompletionSummary {
    pub elapsed: u32,
    pub energized: usize,
    pub damaged: usize,
    pub unreached: usize,
    /// Non-energized bus count integrated over the executed steps.
    pub accrued_cost: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub problem_id: String,
    pub policy_version: u32,
    pub state: usize,
    pub elapsed: u32,
    pub terminal: bool,
    pub status: Vec<BusStatus>,
    pub teams: Vec<TeamView>,
    pub action: usize,
    pub commands: Vec<CommandView>,
    /// Optimal expected cost from the current state.
    pub expected_cost: f64,
    /// Buses whose outcome the next report may contain.
    pub pending_buses: Vec<usize>,
    pub alternatives: Vec<ActionOption>,
    pub last_step: Option<StepDelta>,
    pub summary: Option<CompletionSummary>,
    pub steps: usize,
}

fn view(id: &str, session: &Session) -> Result<SessionView, ApiError> {
    let plan = &session.plan;
    let exec = &session.exec;
    let status = plan.status(exec);
    let teams = plan.physical_teams(exec);
    let action = plan.recommended_action(exec);
    let commands = plan
        .commands(exec, action)
        .into_iter()
        .zip(&teams)
        .enumerate()
        .map(|(k, (cmd, team))| CommandView {
            team: k + 1,
            command: cmd.code(),
            target: match cmd {
                TeamCommand::GoTo(b) => b + 1,
                TeamCommand::Wait | TeamCommand::Continue => team.destination + 1,
            },
        })
        .collect();
    let mut alternatives = plan.options(exec).map_err(|e| ApiError::internal(e.to_string()))?;
    alternatives.sort_by(|a, b| a.expected_cost.total_cmp(&b.expected_cost).then(a.index.cmp(&b.index)));
    alternatives.truncate(LISTED_ALTERNATIVES);
    let terminal = plan.is_terminal(exec);
    Ok(SessionView {
        session_id: id.to_string(),
        problem_id: session.problem_id.clone(),
        policy_version: session.policy_version,
        state: exec.state,
        elapsed: exec.elapsed,
        terminal,
        status: status.statuses(),
        teams: teams
            .iter()
            .enumerate()
            .map(|(k, t)| TeamView { team: k + 1, bus: t.destination + 1, remaining: t.remaining, en_route: t.is_en_route() })
            .collect(),
        action,
        commands,
        expected_cost: plan.policy.optimal_value(exec.state),
        pending_buses: if terminal { Vec::new() } else { plan.pending_buses(exec, action).iter().map(|b| b + 1).collect() },
        alternatives,
        last_step: exec.history.last().map(|h| StepDelta {
            changes: h.changes.iter().map(|&(bus, status)| BusChange { bus, status }).collect(),
            duration: h.duration,
        }),
        summary: terminal.then(|| CompletionSummary {
            elapsed: exec.elapsed,
            energized: status.energized().len(),
            damaged: status.damaged().len(),
            unreached: status.unknown().len(),
            accrued_cost: exec
                .history
                .iter()
                .map(|h| u64::from(cost(&plan.mdp.state(h.state).status)) * u64::from(h.duration))
                .sum(),
        }),
        steps: exec.history.len(),
    })
}

fn session(state: &AppState, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
    lock(&state.inner.sessions).get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CreateSession {
    problem_id: String,
}

pub(crate) async fn create_session(State(state): State<AppState>, body: String) -> Result<Response, ApiError> {
    let request: CreateSession =
        serde_json::from_str(&body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))?;
    let (plan, policy_version) = solved_plan(&state, &request.problem_id)?;
    let session = Session { problem_id: request.problem_id, policy_version, exec: plan.start(), plan };
    let id = state.fresh_id("s");
    let body = view(&id, &session)?;
    lock(&state.inner.sessions).insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

pub(crate) async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let session = session(&state, &id)?;
    let guard = lock(&session);
    view(&id, &guard).map(Json)
}

/// Either a bare `{bus: outcome}` map or `{"outcomes": {...}, "action": k}`
/// when the crew carried out an alternative action.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ReportRequest {
    Explicit {
        outcomes: BTreeMap<String, String>,
        #[serde(default)]
        action: Option<usize>,
    },
    Outcomes(BTreeMap<String, String>),
}

fn parse_outcome(bus: &str, outcome: &str) -> Result<(usize, BusStatus), ApiError> {
    let id: usize = bus
        .trim()
        .parse()
        .ok()
        .filter(|&b| b >= 1)
        .ok_or_else(|| ApiError::bad_request(format!("'{bus}' is not a 1-based bus id")))?;
    let status = match outcome.to_ascii_lowercase().as_str() {
        "energized" | "e" => BusStatus::Energized,
        "damaged" | "d" => BusStatus::Damaged,
        _ => {
            return Err(ApiError::bad_request(format!(
                "outcome '{outcome}' for bus {id} must be \"energized\" or \"damaged\""
            )))
        }
    };
    Ok((id - 1, status))
}

pub(crate) async fn report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<SessionView>, ApiError> {
    let request: ReportRequest =
        serde_json::from_str(&body).map_err(|e| ApiError::bad_request(format!("malformed report: {e}")))?;
    let (outcomes, action) = match request {
        ReportRequest::Explicit { outcomes, action } => (outcomes, action),
        ReportRequest::Outcomes(outcomes) => (outcomes, None),
    };
    let outcomes = outcomes.iter().map(|(b, o)| parse_outcome(b, o)).collect::<Result<Vec<_>, _>>()?;

    let session = session(&state, &id)?;
    let mut guard = lock(&session);
    let s = &mut *guard;
    let action = action.unwrap_or_else(|| s.plan.recommended_action(&s.exec));
    let count = s.plan.mdp.action_count(s.exec.state);
    if action >= count {
        return Err(ApiError::not_found("action", &action.to_string()));
    }
    s.plan.report_action(&mut s.exec, action, &outcomes).map_err(|err| match err {
        ExecError::NoMatch { .. } => ApiError::unprocessable("no_matching_outcome", err.to_string()),
        ExecError::Terminal => ApiError::unprocessable("session_complete", err.to_string()),
        ExecError::UnknownBus(_) => ApiError::bad_request(err.to_string()),
        ExecError::Solve(e) => ApiError::internal(e.to_string()),
    })?;
    view(&id, s).map(Json)
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct WhatIfQuery {
    action: usize,
}

pub(crate) async fn what_if(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<WhatIfQuery>,
) -> Result<Json<ActionOption>, ApiError> {
    let session = session(&state, &id)?;
    let guard = lock(&session);
    let options = guard.plan.options(&guard.exec).map_err(|e| ApiError::internal(e.to_string()))?;
    options
        .into_iter()
        .nth(query.action)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("action", &query.action.to_string()))
}
