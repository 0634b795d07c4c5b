//! HTTP/JSON endpoints. Mutations go through the store's single writer;
//! reads use the latest published state. Every error body has the shape
//! `{"error": {"kind": ..., "message": ...}}`.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use courseops_core::attendance::{evaluate_attendance, parse_session_log, AttendanceError, AttendanceReport};
use courseops_core::ics::export_ics;
use courseops_core::lost_students::{conversion_stats, ingest_lms_export, LostStudentCase, LostStudentError, Trigger};
use courseops_core::ops::{DetectionPhase, EventSubject, OpsCommand, OpsContext, OpsError, OpsState};
use courseops_core::{
    find_replacement_candidates, generate_schedule, plan_org, week_monday, Assignment, CaseId, ModelError,
    NewSwapRequest, PlannerParams, RequestId, RequestState, Resolution, Schedule, Shift, SolveError, SolverConfig,
    StudentId, SwapRequest, TaId, TeachingAssistant, WorkflowError,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::data::{CourseData, SESSIONS};
use crate::store::{Applied, Store};
use crate::views::{CoverageCell, WeekView};

pub const IDEMPOTENCY_KEY: &str = "idempotency-key";
pub const IDEMPOTENCY_REPLAYED: &str = "idempotency-replayed";

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

pub struct AppState {
    pub store: Store,
    pub ctx: Arc<OpsContext>,
    pub data: CourseData,
    pub config: Config,
    pub clock: Clock,
}

impl AppState {
    fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn today(&self) -> NaiveDate {
        self.ctx.today(self.now())
    }
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
    pub extra: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, kind, message: message.into(), extra: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "kind": self.kind, "message": self.message });
        if let (Some(Value::Object(extra)), Value::Object(map)) = (self.extra, &mut error) {
            map.extend(extra);
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

fn model_error(e: &ModelError) -> ApiError {
    match e {
        ModelError::UnknownTa(_) | ModelError::UnknownShift(_) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_reference", e.to_string())
        }
        _ => ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", e.to_string()),
    }
}

impl From<OpsError> for ApiError {
    fn from(e: OpsError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        match &e {
            OpsError::Workflow(w) => match w {
                WorkflowError::WrongState { state, .. } => ApiError {
                    extra: Some(json!({ "state": state })),
                    ..ApiError::new(S::CONFLICT, "wrong_state", message)
                },
                WorkflowError::InvalidResolution { predicate, .. } => ApiError {
                    extra: Some(json!({ "predicate": predicate })),
                    ..ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_resolution", message)
                },
                WorkflowError::NoOwner(_) => ApiError::new(S::CONFLICT, "not_configured", message),
                WorkflowError::Model(m) => model_error(m),
                _ => ApiError::new(S::UNPROCESSABLE_ENTITY, "invalid_request", message),
            },
            OpsError::LostStudent(l) => match l {
                LostStudentError::SchemaError(_) | LostStudentError::Csv(_) => ApiError::new(S::BAD_REQUEST, "bad_csv", message),
                LostStudentError::UnknownStudent(_) => ApiError::new(S::NOT_FOUND, "unknown_student", message),
                LostStudentError::WrongPhase { .. } => ApiError::new(S::UNPROCESSABLE_ENTITY, "wrong_phase", message),
                LostStudentError::WrongState { state, .. } => ApiError {
                    extra: Some(json!({ "state": state })),
                    ..ApiError::new(S::CONFLICT, "wrong_state", message)
                },
                LostStudentError::NoMembers(_) | LostStudentError::Config(_) => {
                    ApiError::new(S::CONFLICT, "not_configured", message)
                }
            },
            OpsError::Model(m) => model_error(m),
            OpsError::NotFound { .. } => ApiError::new(S::NOT_FOUND, "not_found", message),
            OpsError::NoSchedule => ApiError::new(S::CONFLICT, "no_schedule", message),
            OpsError::Rejected(_) => ApiError::new(S::UNPROCESSABLE_ENTITY, "rejected", message),
            OpsError::NotConfigured(_) => ApiError::new(S::CONFLICT, "not_configured", message),
            OpsError::CorruptLog { .. } | OpsError::Io(_) => ApiError::new(S::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// `Json` whose rejections use the API error shape.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(value)) => Ok(JsonBody(value)),
            Err(r) => Err(ApiError::new(r.status(), "bad_request", r.body_text())),
        }
    }
}

/// `Query` whose rejections use the API error shape.
pub struct QueryParams<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for QueryParams<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        match Query::<T>::from_request_parts(parts, state).await {
            Ok(Query(value)) => Ok(QueryParams(value)),
            Err(r) => Err(ApiError::new(r.status(), "bad_request", r.body_text())),
        }
    }
}

fn idempotency_key(headers: &HeaderMap) -> ApiResult<Option<String>> {
    match headers.get(IDEMPOTENCY_KEY) {
        None => Ok(None),
        Some(v) => {
            let key = v.to_str().map_err(|_| ApiError::bad_request("Idempotency-Key must be visible ASCII"))?.trim();
            if key.is_empty() {
                return Err(ApiError::bad_request("Idempotency-Key is empty"));
            }
            Ok(Some(key.to_string()))
        }
    }
}

/// Serializes `body` with `status`, marking responses served from an earlier
/// submission with the same idempotency key.
fn respond<T: Serialize>(status: StatusCode, applied: &Applied, body: T) -> Response {
    if applied.commit.replayed {
        let mut response = (StatusCode::OK, Json(body)).into_response();
        response.headers_mut().insert(IDEMPOTENCY_REPLAYED, HeaderValue::from_static("true"));
        response
    } else {
        (status, Json(body)).into_response()
    }
}

async fn submit(app: &AppState, command: OpsCommand, headers: &HeaderMap) -> ApiResult<Applied> {
    let key = idempotency_key(headers)?;
    Ok(app.store.submit(command, key, app.now()).await?)
}

fn parse_date(field: &str, text: &str) -> ApiResult<NaiveDate> {
    text.parse().map_err(|_| ApiError::bad_request(format!("{field} must be a YYYY-MM-DD date, got {text:?}")))
}

// --- health, planning, solving ------------------------------------------

async fn health(State(app): State<Shared>) -> Json<Value> {
    let state = app.store.state();
    Json(json!({
        "status": "ok",
        "last_seq": state.last_seq,
        "has_schedule": state.schedule.is_some(),
        "tas": app.ctx.roster.len(),
        "shifts": app.ctx.shifts.len(),
        "open_requests": state.requests.values().filter(|r| r.state.is_open()).count(),
        "open_cases": state.cases.values().filter(|c| c.state.is_open()).count(),
        "timezone": app.config.timezone.name(),
        "today": app.today(),
    }))
}

#[derive(Debug, Deserialize)]
struct PlanQuery {
    students: Option<u32>,
    students_per_ta: Option<u32>,
    team_size: Option<u32>,
    functional_team_count: Option<u32>,
    students_per_regular_team: Option<u32>,
    students_per_instructor: Option<u32>,
    instructor_layer_limit: Option<u32>,
}

async fn org_plan(QueryParams(q): QueryParams<PlanQuery>) -> ApiResult<Json<Value>> {
    let students = q.students.ok_or_else(|| ApiError::bad_request("students is required"))?;
    let d = PlannerParams::default();
    let params = PlannerParams {
        students_per_ta: q.students_per_ta.unwrap_or(d.students_per_ta),
        team_size: q.team_size.unwrap_or(d.team_size),
        functional_team_count: q.functional_team_count.unwrap_or(d.functional_team_count),
        students_per_regular_team: q.students_per_regular_team.unwrap_or(d.students_per_regular_team),
        students_per_instructor: q.students_per_instructor.unwrap_or(d.students_per_instructor),
        instructor_layer_limit: q.instructor_layer_limit.unwrap_or(d.instructor_layer_limit),
    };
    let plan = plan_org(students, &params).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(json!({ "params": params, "plan": plan })))
}

#[derive(Debug, Deserialize)]
struct SolveBody {
    roster: Option<Vec<TeachingAssistant>>,
    shifts: Option<Vec<Shift>>,
    seed: Option<u64>,
    time_limit_ms: Option<u64>,
    week_anchor: Option<NaiveDate>,
}

async fn solve(State(app): State<Shared>, JsonBody(body): JsonBody<SolveBody>) -> ApiResult<Json<Value>> {
    let roster = body.roster.unwrap_or_else(|| app.ctx.roster.clone());
    let shifts = body.shifts.unwrap_or_else(|| app.ctx.shifts.clone());
    let base = app.config.solver();
    let config = SolverConfig {
        seed: body.seed.unwrap_or(base.seed),
        time_limit_ms: body.time_limit_ms.unwrap_or(base.time_limit_ms),
        ..base
    };
    let anchor = body.week_anchor.map(week_monday).unwrap_or_else(|| week_monday(app.today()));
    let outcome = tokio::task::spawn_blocking(move || {
        generate_schedule(&roster, &shifts, &config, anchor).map(|o| (o, shifts))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    match outcome {
        Ok((outcome, shifts)) => {
            let cells: Vec<CoverageCell> = match &outcome {
                courseops_core::SolveOutcome::Feasible { schedule } => crate::views::coverage_cells(schedule, &shifts),
                courseops_core::SolveOutcome::Infeasible { .. } => vec![],
            };
            Ok(Json(json!({ "outcome": outcome, "cells": cells })))
        }
        Err(e @ SolveError::TimeLimitExceeded { .. }) => {
            let SolveError::TimeLimitExceeded { best_partial, covered, total } = &e else { unreachable!() };
            Err(ApiError {
                extra: Some(json!({ "best_partial": best_partial, "covered": covered, "total": total })),
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "time_limit_exceeded", e.to_string())
            })
        }
        Err(e) => Err(ApiError::bad_request(e.to_string())),
    }
}

async fn roster(State(app): State<Shared>) -> Json<Vec<TeachingAssistant>> {
    Json(app.ctx.roster.clone())
}

async fn shifts(State(app): State<Shared>) -> Json<Vec<Shift>> {
    Json(app.ctx.shifts.clone())
}

// --- schedule --------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct WeekQuery {
    week: Option<String>,
}

impl WeekQuery {
    fn monday(&self, app: &AppState) -> ApiResult<NaiveDate> {
        Ok(week_monday(match &self.week {
            Some(text) => parse_date("week", text)?,
            None => app.today(),
        }))
    }
}

async fn get_schedule(State(app): State<Shared>, QueryParams(q): QueryParams<WeekQuery>) -> ApiResult<Json<WeekView>> {
    let monday = q.monday(&app)?;
    let schedule = app.store.state().schedule_for_week(monday);
    Ok(Json(WeekView::new(monday, schedule.as_ref(), &app.ctx.shifts)))
}

#[derive(Debug, Deserialize)]
struct ScheduleBody {
    week_anchor: Option<NaiveDate>,
    assignments: Vec<Assignment>,
}

async fn put_schedule(State(app): State<Shared>, headers: HeaderMap, JsonBody(body): JsonBody<ScheduleBody>) -> ApiResult<Response> {
    let anchor = week_monday(body.week_anchor.unwrap_or_else(|| app.today()));
    let schedule = Schedule::with_assignments(anchor, body.assignments);
    let applied = submit(&app, OpsCommand::SetSchedule { schedule }, &headers).await?;
    let view = WeekView::new(anchor, applied.state.schedule_for_week(anchor).as_ref(), &app.ctx.shifts);
    Ok(respond(StatusCode::OK, &applied, view))
}

// --- swap requests -----------------------------------------------------------

#[derive(Debug, Deserialize)]
struct StateQuery {
    state: Option<String>,
}

fn requests_by_date<'a>(it: impl Iterator<Item = &'a SwapRequest>) -> Vec<SwapRequest> {
    let mut out: Vec<SwapRequest> = it.cloned().collect();
    out.sort_by(|a, b| (a.occurrence_date, &a.id).cmp(&(b.occurrence_date, &b.id)));
    out
}

async fn list_requests(State(app): State<Shared>, QueryParams(q): QueryParams<StateQuery>) -> ApiResult<Json<Vec<SwapRequest>>> {
    let filter: Option<RequestState> = match &q.state {
        Some(text) => Some(text.parse().map_err(|_| {
            ApiError::bad_request(format!("state must be submitted, claimed, resolved or escalated, got {text:?}"))
        })?),
        None => None,
    };
    let state = app.store.state();
    Ok(Json(requests_by_date(state.requests.values().filter(|r| filter.is_none_or(|f| r.state == f)))))
}

fn request_of(state: &OpsState, id: &RequestId) -> ApiResult<SwapRequest> {
    Ok(state.request(id)?.clone())
}

async fn get_request(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<SwapRequest>> {
    Ok(Json(request_of(&app.store.state(), &RequestId(id))?))
}

async fn create_request(State(app): State<Shared>, headers: HeaderMap, JsonBody(body): JsonBody<NewSwapRequest>) -> ApiResult<Response> {
    let applied = submit(&app, OpsCommand::SubmitRequest { request: body }, &headers).await?;
    let id = applied
        .commit
        .subjects
        .iter()
        .find_map(|s| match s {
            EventSubject::Request(id) => Some(id.clone()),
            _ => None,
        })
        .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "no request was recorded"))?;
    Ok(respond(StatusCode::CREATED, &applied, request_of(&applied.state, &id)?))
}

async fn request_command(app: &AppState, headers: &HeaderMap, id: RequestId, command: OpsCommand) -> ApiResult<Response> {
    let applied = submit(app, command, headers).await?;
    Ok(respond(StatusCode::OK, &applied, request_of(&applied.state, &id)?))
}

async fn claim_request(State(app): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let id = RequestId(id);
    request_command(&app, &headers, id.clone(), OpsCommand::ClaimRequest { id }).await
}

async fn resolve_request(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    JsonBody(resolution): JsonBody<Resolution>,
) -> ApiResult<Response> {
    let id = RequestId(id);
    request_command(&app, &headers, id.clone(), OpsCommand::ResolveRequest { id, resolution }).await
}

async fn escalate_request(State(app): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let id = RequestId(id);
    request_command(&app, &headers, id.clone(), OpsCommand::EscalateRequest { id }).await
}

#[derive(Debug, Serialize)]
struct Candidate {
    ta_id: TaId,
    display_name: String,
}

async fn candidates(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let state = app.store.state();
    let request = request_of(&state, &RequestId(id))?;
    let schedule = state.schedule_for_week(request.occurrence_date).ok_or(OpsError::NoSchedule)?;
    let excluded = BTreeSet::from([request.requester.clone()]);
    let ids = find_replacement_candidates(&schedule, &app.ctx.roster, &app.ctx.shifts, &request.shift_id, &excluded)
        .map_err(|e| model_error(&e))?;
    let list: Vec<Candidate> = ids
        .into_iter()
        .map(|ta_id| {
            let display_name = app.ctx.roster.iter().find(|t| t.id == ta_id).map(|t| t.display_name.clone()).unwrap_or_default();
            Candidate { ta_id, display_name }
        })
        .collect();
    Ok(Json(json!({ "request_id": request.id, "shift_id": request.shift_id, "occurrence_date": request.occurrence_date, "candidates": list })))
}

#[derive(Debug, Deserialize)]
struct AsOfQuery {
    as_of: Option<String>,
}

fn touched_requests(applied: &Applied) -> Vec<SwapRequest> {
    requests_by_date(applied.commit.subjects.iter().filter_map(|s| match s {
        EventSubject::Request(id) => applied.state.requests.get(id),
        _ => None,
    }))
}

async fn run_reverts(State(app): State<Shared>, QueryParams(q): QueryParams<AsOfQuery>, headers: HeaderMap) -> ApiResult<Response> {
    let as_of = match &q.as_of {
        Some(text) => parse_date("as_of", text)?,
        None => app.today(),
    };
    let applied = submit(&app, OpsCommand::RunReverts { as_of }, &headers).await?;
    Ok(respond(StatusCode::OK, &applied, json!({ "as_of": as_of, "reverted": touched_requests(&applied) })))
}

async fn escalate_due(State(app): State<Shared>, headers: HeaderMap) -> ApiResult<Response> {
    let applied = submit(&app, OpsCommand::EscalateDue, &headers).await?;
    Ok(respond(StatusCode::OK, &applied, json!({ "escalated": touched_requests(&applied) })))
}

/// The instructor feed: escalated requests with the shift they concern.
async fn escalation_report(State(app): State<Shared>) -> Json<Value> {
    let state = app.store.state();
    let items: Vec<Value> = requests_by_date(state.requests.values().filter(|r| r.state == RequestState::Escalated))
        .into_iter()
        .map(|r| {
            let shift = app.ctx.shifts.iter().find(|s| s.id == r.shift_id);
            json!({
                "request": r,
                "shift": shift,
                "requester_name": app.ctx.roster.iter().find(|t| t.id == r.requester).map(|t| t.display_name.clone()),
            })
        })
        .collect();
    Json(json!({ "generated_at": app.now(), "escalated": items }))
}

// --- attendance --------------------------------------------------------------

fn attendance_report(app: &AppState, monday: NaiveDate, csv: &str) -> ApiResult<Value> {
    let state = app.store.state();
    let schedule = state.schedule_for_week(monday).ok_or(OpsError::NoSchedule)?;
    let (entries, rejects) = match parse_session_log(csv, app.config.timezone) {
        Ok(log) => (log.entries, log.rejects),
        Err(AttendanceError::EmptyInput { rejects }) => (vec![], rejects),
        Err(e @ (AttendanceError::MissingColumn(_) | AttendanceError::Csv(_))) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_csv", e.to_string()))
        }
        Err(AttendanceError::Model(e)) => return Err(model_error(&e)),
    };
    let report: AttendanceReport = evaluate_attendance(
        &entries,
        &schedule,
        &app.ctx.roster,
        &app.ctx.shifts,
        &app.config.attendance,
        monday,
        app.config.timezone,
    )
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(json!({ "week": monday, "flags": report.flags, "notes": report.notes, "rejects": rejects }))
}

async fn attendance_flags(State(app): State<Shared>, QueryParams(q): QueryParams<WeekQuery>) -> ApiResult<Json<Value>> {
    let monday = q.monday(&app)?;
    let path = app.config.data_dir.join(SESSIONS).join(format!("{monday}.csv"));
    let csv = match std::fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session log for the week of {monday}")))
        }
        Err(e) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    };
    Ok(Json(attendance_report(&app, monday, &csv)?))
}

async fn attendance_upload(State(app): State<Shared>, QueryParams(q): QueryParams<WeekQuery>, body: String) -> ApiResult<Json<Value>> {
    let monday = q.monday(&app)?;
    Ok(Json(attendance_report(&app, monday, &body)?))
}

// --- lost students -------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct QueueQuery {
    state: Option<String>,
    #[serde(default)]
    all: bool,
}

async fn queue(State(app): State<Shared>, QueryParams(q): QueryParams<QueueQuery>) -> Json<Value> {
    let state = app.store.state();
    let mut cases: Vec<&LostStudentCase> = state
        .cases
        .values()
        .filter(|c| match &q.state {
            Some(name) => c.state.name().eq_ignore_ascii_case(name),
            None => q.all || c.state.is_open(),
        })
        .collect();
    cases.sort_by(|a, b| (a.identified_on, &a.id).cmp(&(b.identified_on, &b.id)));
    let all: Vec<LostStudentCase> = state.cases.values().cloned().collect();
    Json(json!({ "cases": cases, "stats": conversion_stats(&all) }))
}

fn case_of(state: &OpsState, id: &CaseId) -> ApiResult<LostStudentCase> {
    Ok(state.case(id)?.clone())
}

async fn get_case(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<LostStudentCase>> {
    Ok(Json(case_of(&app.store.state(), &CaseId(id))?))
}

async fn case_command(app: &AppState, headers: &HeaderMap, id: CaseId, command: OpsCommand) -> ApiResult<Response> {
    let applied = submit(app, command, headers).await?;
    Ok(respond(StatusCode::OK, &applied, case_of(&applied.state, &id)?))
}

async fn triage_case(State(app): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let id = CaseId(id);
    case_command(&app, &headers, id.clone(), OpsCommand::TriageCase { id }).await
}

#[derive(Debug, Default, Deserialize)]
struct OnBody {
    on: Option<NaiveDate>,
}

/// An empty body means "today".
fn optional_body(body: &Bytes) -> ApiResult<OnBody> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(OnBody::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))
}

async fn contact_case(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let id = CaseId(id);
    let on = optional_body(&body)?.on;
    case_command(&app, &headers, id.clone(), OpsCommand::ContactCase { id, on }).await
}

async fn meeting_case(
    State(app): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let id = CaseId(id);
    let on = optional_body(&body)?.on;
    case_command(&app, &headers, id.clone(), OpsCommand::MeetingHeld { id, on }).await
}

async fn close_case(State(app): State<Shared>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    let id = CaseId(id);
    case_command(&app, &headers, id.clone(), OpsCommand::CloseCase { id }).await
}

#[derive(Debug, Deserialize)]
struct ReportBody {
    student_id: StudentId,
    reporter: TaId,
}

async fn report_student(State(app): State<Shared>, headers: HeaderMap, JsonBody(body): JsonBody<ReportBody>) -> ApiResult<Response> {
    if !app.ctx.roster.iter().any(|t| t.id == body.reporter) {
        return Err(model_error(&ModelError::UnknownTa(body.reporter.to_string())));
    }
    let student = body.student_id.clone();
    let applied = submit(&app, OpsCommand::ReportStudent { student_id: body.student_id, reporter: body.reporter }, &headers).await?;
    let created = applied.commit.subjects.iter().find_map(|s| match s {
        EventSubject::Case(id) => Some(id.clone()),
        _ => None,
    });
    let case = match created {
        Some(id) => case_of(&applied.state, &id)?,
        // an open report already exists for this student
        None => applied
            .state
            .cases
            .values()
            .find(|c| c.student_id == student && c.state.is_open() && matches!(c.trigger, Trigger::Reported(_)))
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "report was not recorded"))?,
    };
    let status = if applied.commit.records.is_empty() { StatusCode::OK } else { StatusCode::CREATED };
    Ok(respond(status, &applied, case))
}

#[derive(Debug, Deserialize)]
struct DetectQuery {
    as_of: Option<String>,
    phase: Option<String>,
}

fn parse_phase(text: &str) -> ApiResult<DetectionPhase> {
    match text.to_ascii_lowercase().as_str() {
        "onboarding" => Ok(DetectionPhase::Onboarding),
        "proactive" => Ok(DetectionPhase::Proactive),
        _ => Err(ApiError::bad_request(format!("phase must be onboarding or proactive, got {text:?}"))),
    }
}

/// Takes an LMS export as the request body.
async fn detect(State(app): State<Shared>, QueryParams(q): QueryParams<DetectQuery>, headers: HeaderMap, body: String) -> ApiResult<Response> {
    let detection = app.ctx.detection.as_ref().ok_or(OpsError::NotConfigured("lost-student detection"))?;
    let as_of = match &q.as_of {
        Some(text) => parse_date("as_of", text)?,
        None => app.today(),
    };
    let phase = match &q.phase {
        Some(text) => parse_phase(text)?,
        None if as_of <= detection.add_drop_date => DetectionPhase::Onboarding,
        None => DetectionPhase::Proactive,
    };
    let import = ingest_lms_export(&body, &app.data.deliverables, app.config.timezone).map_err(OpsError::from)?;
    let records = import.records.len();
    let applied = submit(&app, OpsCommand::Detect { records: import.records, phase, as_of }, &headers).await?;
    let opened: Vec<LostStudentCase> = applied
        .commit
        .subjects
        .iter()
        .filter_map(|s| match s {
            EventSubject::Case(id) => applied.state.cases.get(id).cloned(),
            _ => None,
        })
        .collect();
    Ok(respond(
        StatusCode::OK,
        &applied,
        json!({ "as_of": as_of, "phase": phase, "records": records, "rejects": import.rejects, "opened": opened }),
    ))
}

// --- calendar --------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct IcsQuery {
    term_start: Option<String>,
    weeks: Option<u32>,
}

async fn ics(State(app): State<Shared>, Path(ta): Path<String>, QueryParams(q): QueryParams<IcsQuery>) -> ApiResult<Response> {
    let term_start = match &q.term_start {
        Some(text) => parse_date("term_start", text)?,
        None => app.config.term_start.ok_or(OpsError::NotConfigured("term_start"))?,
    };
    let weeks = q.weeks.unwrap_or(app.config.term_weeks);
    let state = app.store.state();
    let schedule = state.schedule.as_ref().ok_or(OpsError::NoSchedule)?;
    let text = export_ics(&TaId(ta.clone()), schedule, &app.ctx.roster, &app.ctx.shifts, term_start, weeks).map_err(|e| match e {
        ModelError::UnknownTa(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
        e => model_error(&e),
    })?;
    let disposition = format!("attachment; filename=\"{ta}.ics\"");
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("text/calendar; charset=utf-8")),
            (header::CONTENT_DISPOSITION, HeaderValue::from_str(&disposition).unwrap_or(HeaderValue::from_static("attachment"))),
        ],
        text,
    )
        .into_response())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/org-plan", get(org_plan))
        .route("/api/solve", post(solve))
        .route("/api/roster", get(roster))
        .route("/api/shifts", get(shifts))
        .route("/api/schedule", get(get_schedule).put(put_schedule))
        .route("/api/swap-requests", get(list_requests).post(create_request))
        .route("/api/swap-requests/reverts", post(run_reverts))
        .route("/api/swap-requests/escalate-due", post(escalate_due))
        .route("/api/swap-requests/{id}", get(get_request))
        .route("/api/swap-requests/{id}/claim", post(claim_request))
        .route("/api/swap-requests/{id}/resolve", post(resolve_request))
        .route("/api/swap-requests/{id}/escalate", post(escalate_request))
        .route("/api/swap-requests/{id}/candidates", get(candidates))
        .route("/api/reports/escalations", get(escalation_report))
        .route("/api/attendance/flags", get(attendance_flags).post(attendance_upload))
        .route("/api/lost-students/queue", get(queue))
        .route("/api/lost-students/report", post(report_student))
        .route("/api/lost-students/detect", post(detect))
        .route("/api/lost-students/{id}", get(get_case))
        .route("/api/lost-students/{id}/triage", post(triage_case))
        .route("/api/lost-students/{id}/contact", post(contact_case))
        .route("/api/lost-students/{id}/meeting", post(meeting_case))
        .route("/api/lost-students/{id}/close", post(close_case))
        .route("/api/ics/{ta}", get(ics))
        .fallback(not_found)
        .with_state(state)
}
