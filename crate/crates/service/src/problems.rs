//! Problem upload, background solves and partitioned solves.

use std::sync::atomic::AtomicUsize;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use restoration_core::executor::Plan;
use restoration_core::mdp_builder::{build_with, BuildOptions};
use restoration_core::partition::{solve_partitioned, PartitionError, PartitionReport, PartitionSpec};
use restoration_core::solver::{average_expected_cost_per_bus, solve};
use restoration_core::system_model::PartitionEntry;
use restoration_core::{BuildError, DistributionSystem, Horizon, OptFlags, ProblemDocument, SolveError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::{lock, AppState};

pub(crate) struct ProblemEntry {
    pub system: Arc<DistributionSystem>,
    pub document: ProblemDocument,
    pub notes: Vec<String>,
    pub active_job: Option<String>,
    pub plan: Option<Arc<Plan>>,
    pub summary: Option<SolveSummary>,
    pub policy_version: u32,
}

pub(crate) struct JobEntry {
    pub problem_id: String,
    pub flags: String,
    pub status: JobStatus,
    pub progress: Arc<AtomicUsize>,
    pub started: Instant,
    pub finished_seconds: Option<f64>,
    pub summary: Option<SolveSummary>,
    pub error: Option<ApiError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Building,
    Solving,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub flags: String,
    pub states: usize,
    pub actions: usize,
    pub transitions: usize,
    pub horizon: u32,
    pub initial_value: f64,
    pub expected_cost_per_bus: f64,
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub policy_version: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub job_id: String,
    pub problem_id: String,
    pub flags: String,
    pub status: JobStatus,
    pub states_explored: usize,
    pub elapsed_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SolveSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<crate::ErrorBody>,
}

/// `horizon` accepts a positive integer or the string `"auto"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum HorizonParam {
    Steps(u32),
    Named(String),
}

impl HorizonParam {
    fn resolve(&self) -> Result<Horizon, ApiError> {
        match self {
            HorizonParam::Steps(0) => Err(ApiError::bad_request("horizon must be at least 1")),
            HorizonParam::Steps(h) => Ok(Horizon::Fixed(*h)),
            HorizonParam::Named(s) if s.eq_ignore_ascii_case("auto") => Ok(Horizon::Auto),
            HorizonParam::Named(s) => Err(ApiError::bad_request(format!("horizon '{s}' is neither a number nor \"auto\""))),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    #[serde(default)]
    pub flags: Option<String>,
    #[serde(default)]
    pub horizon: Option<HorizonParam>,
    /// Lower than the service-wide cap only; larger values are clamped.
    #[serde(default)]
    pub max_states: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionRequest {
    #[serde(default)]
    pub flags: Option<String>,
    #[serde(default)]
    pub horizon: Option<HorizonParam>,
    /// Groups with 1-based ids; the document's own partitions otherwise.
    #[serde(default)]
    pub groups: Option<Vec<PartitionEntry>>,
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(body: &str) -> Result<T, ApiError> {
    if body.trim().is_empty() {
        return Ok(T::default());
    }
    serde_json::from_str(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

fn parse_flags(state: &AppState, text: Option<&str>) -> Result<OptFlags, ApiError> {
    match text {
        None => Ok(state.config().default_flags),
        Some(t) => OptFlags::parse(t).map_err(ApiError::bad_request),
    }
}

fn cap_hint(id: &str) -> String {
    format!(
        "split the system with POST /problems/{id}/partition, enable more reductions, or raise the state cap"
    )
}

pub(crate) async fn create_problem(State(state): State<AppState>, body: String) -> Result<Response, ApiError> {
    let document = ProblemDocument::parse(&body)?;
    let (system, report) = document.build()?;
    let id = state.fresh_id("p");
    let body = json!({
        "id": id,
        "name": system.name(),
        "buses": system.bus_count(),
        "branches": system.branches().len(),
        "teams": system.team_count(),
        "notes": report.notes,
    });
    lock(&state.inner.problems).insert(
        id,
        ProblemEntry {
            system: Arc::new(system),
            document,
            notes: report.notes,
            active_job: None,
            plan: None,
            summary: None,
            policy_version: 0,
        },
    );
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

pub(crate) async fn get_problem(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let problems = lock(&state.inner.problems);
    let entry = problems.get(&id).ok_or_else(|| ApiError::not_found("problem", &id))?;
    Ok(Json(json!({
        "id": id,
        "document": entry.document,
        "notes": entry.notes,
        "solved": entry.plan.is_some(),
        "policy_version": entry.policy_version,
        "active_job": entry.active_job,
        "solution": entry.summary,
    }))
    .into_response())
}

pub(crate) async fn start_solve(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Response, ApiError> {
    let request: SolveRequest = parse_json(&body)?;
    let flags = parse_flags(&state, request.flags.as_deref())?;
    let horizon = request.horizon.as_ref().map(HorizonParam::resolve).transpose()?.unwrap_or(Horizon::Auto);
    let cap = request.max_states.unwrap_or(usize::MAX).min(state.config().max_states);

    let job_id = state.fresh_id("j");
    let progress = Arc::new(AtomicUsize::new(0));
    let system = {
        let mut problems = lock(&state.inner.problems);
        let entry = problems.get_mut(&id).ok_or_else(|| ApiError::not_found("problem", &id))?;
        if let Some(running) = &entry.active_job {
            return Err(ApiError::conflict(format!("problem '{id}' is already being solved by job '{running}'")));
        }
        entry.active_job = Some(job_id.clone());
        entry.system.clone()
    };
    lock(&state.inner.jobs).insert(
        job_id.clone(),
        JobEntry {
            problem_id: id.clone(),
            flags: flags.label(),
            status: JobStatus::Building,
            progress: progress.clone(),
            started: Instant::now(),
            finished_seconds: None,
            summary: None,
            error: None,
        },
    );

    let task_state = state.clone();
    let task_job = job_id.clone();
    tokio::task::spawn_blocking(move || {
        let options = BuildOptions { state_cap: cap, progress: Some(progress), cancel: None };
        let outcome = run_solve(&task_state, &task_job, &system, flags, horizon, &options);
        finish_job(&task_state, &task_job, &id, outcome);
    });

    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id, "status": JobStatus::Building }))).into_response())
}

fn run_solve(
    state: &AppState,
    job_id: &str,
    system: &Arc<DistributionSystem>,
    flags: OptFlags,
    horizon: Horizon,
    options: &BuildOptions,
) -> Result<(Plan, SolveSummary), ApiError> {
    let started = Instant::now();
    let mdp = build_with(system, flags, options).map_err(build_error)?;
    let build_seconds = started.elapsed().as_secs_f64();
    if let Some(job) = lock(&state.inner.jobs).get_mut(job_id) {
        job.status = JobStatus::Solving;
    }
    let policy = solve(&mdp, horizon, false).map_err(solve_error)?;
    let meta = mdp.metadata();
    let summary = SolveSummary {
        flags: flags.label(),
        states: meta.states,
        actions: meta.actions,
        transitions: meta.transitions,
        horizon: policy.horizon(),
        initial_value: policy.initial_value(),
        expected_cost_per_bus: average_expected_cost_per_bus(&policy, &mdp),
        build_seconds,
        solve_seconds: policy.solve_seconds(),
        policy_version: 0,
    };
    let plan = Plan { system: system.clone(), mdp: Arc::new(mdp), policy: Arc::new(policy) };
    Ok((plan, summary))
}

fn build_error(err: BuildError) -> ApiError {
    match err {
        BuildError::StateCap { .. } | BuildError::TooManyBuses { .. } => {
            ApiError::unprocessable("resource_cap", err.to_string())
        }
        other => ApiError::internal(other.to_string()),
    }
}

fn solve_error(err: SolveError) -> ApiError {
    match err {
        SolveError::Model(inner) => build_error(inner),
        other => ApiError::internal(other.to_string()),
    }
}

fn finish_job(state: &AppState, job_id: &str, problem_id: &str, outcome: Result<(Plan, SolveSummary), ApiError>) {
    let mut problems = lock(&state.inner.problems);
    let mut jobs = lock(&state.inner.jobs);
    let entry = problems.get_mut(problem_id);
    let job = jobs.get_mut(job_id);
    let (Some(entry), Some(job)) = (entry, job) else { return };
    entry.active_job = None;
    job.finished_seconds = Some(job.started.elapsed().as_secs_f64());
    match outcome {
        Ok((plan, mut summary)) => {
            entry.policy_version += 1;
            summary.policy_version = entry.policy_version;
            entry.plan = Some(Arc::new(plan));
            entry.summary = Some(summary.clone());
            job.summary = Some(summary);
            job.status = JobStatus::Done;
        }
        Err(mut err) => {
            if err.body.code == "resource_cap" {
                err = err.with_hint(cap_hint(problem_id));
            }
            job.error = Some(err);
            job.status = JobStatus::Failed;
        }
    }
}

/// A job that hit the state cap answers with 422 so the console can offer
/// partitioning; other failures answer 500.
pub(crate) async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let jobs = lock(&state.inner.jobs);
    let job = jobs.get(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    let view = JobView {
        job_id: id.clone(),
        problem_id: job.problem_id.clone(),
        flags: job.flags.clone(),
        status: job.status,
        states_explored: job.progress.load(std::sync::atomic::Ordering::Relaxed),
        elapsed_seconds: job.finished_seconds.unwrap_or_else(|| job.started.elapsed().as_secs_f64()),
        result: job.summary.clone(),
        error: job.error.as_ref().map(|e| e.body.clone()),
    };
    let status = job.error.as_ref().map_or(StatusCode::OK, |e| e.status);
    Ok((status, Json(view)).into_response())
}

pub(crate) async fn partition(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<PartitionReport>, ApiError> {
    let request: PartitionRequest = parse_json(&body)?;
    let flags = parse_flags(&state, request.flags.as_deref())?;
    let horizon = request.horizon.as_ref().map(HorizonParam::resolve).transpose()?.unwrap_or(Horizon::Auto);
    let (system, entries) = {
        let problems = lock(&state.inner.problems);
        let entry = problems.get(&id).ok_or_else(|| ApiError::not_found("problem", &id))?;
        let entries = request.groups.or_else(|| entry.document.partitions.clone()).ok_or_else(|| {
            ApiError::bad_request("no partition groups given and the problem document defines none")
        })?;
        (entry.system.clone(), entries)
    };
    let spec = PartitionSpec::from_entries(&entries);
    let options = BuildOptions { state_cap: state.config().max_states, ..BuildOptions::default() };
    let report = tokio::task::spawn_blocking(move || solve_partitioned(&system, &spec, flags, horizon, &options))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
    report.map(Json).map_err(|err| match err {
        PartitionError::Build { .. } => ApiError::unprocessable("resource_cap", err.to_string()),
        PartitionError::Solve { .. } => ApiError::internal(err.to_string()),
        other => ApiError::bad_request(other.to_string()),
    })
}

/// The solved plan of a problem, for session creation.
pub(crate) fn solved_plan(state: &AppState, id: &str) -> Result<(Arc<Plan>, u32), ApiError> {
    let problems = lock(&state.inner.problems);
    let entry = problems.get(id).ok_or_else(|| ApiError::not_found("problem", id))?;
    match &entry.plan {
        Some(plan) => Ok((plan.clone(), entry.policy_version)),
        None => Err(ApiError::conflict(format!("problem '{id}' has no solved policy yet"))),
    }
}
