//! Event-sourced operational state: the active schedule, swap requests and
//! lost-student cases.
//!
//! Commands are validated against the current state and produce events;
//! events are the only thing that changes state, so replaying a log from an
//! empty state reproduces the state exactly. Events carry outcomes (the
//! resolved request, the triaged case) rather than inputs, which keeps replay
//! independent of clocks and configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{check_schedule_with, CoverageRule};
use crate::error::ModelError;
use crate::lost_students::{
    close_case, detect_onboarding, detect_proactive, record_contact, record_meeting, record_report, triage,
    ContactHistory, DetectionConfig, LostStudentCase, LostStudentError, StudentRecord,
};
use crate::model::{local_instant, week_monday, CaseId, Day, RequestId, Schedule, Shift, StudentId, TaId, Team, TeachingAssistant};
use crate::workflow::{
    apply_resolution, auto_claim, due_reverts, escalate, resolve, submit_request, DutyRoster, NewSwapRequest,
    RequestState, Resolution, SwapRequest, WorkflowError,
};

/// Read-only course data the commands are validated against.
#[derive(Debug, Clone)]
pub struct OpsContext {
    pub roster: Vec<TeachingAssistant>,
    pub shifts: Vec<Shift>,
    pub duty: Option<DutyRoster>,
    pub lost_student_team: Option<Team>,
    pub detection: Option<DetectionConfig>,
    /// Students known from data files; detection runs add more to the state.
    pub known_students: BTreeSet<StudentId>,
    pub lead_time: Duration,
    pub coverage: CoverageRule,
    pub tz: Tz,
}

impl OpsContext {
    pub fn new(roster: Vec<TeachingAssistant>, shifts: Vec<Shift>, tz: Tz) -> Self {
        OpsContext {
            roster,
            shifts,
            duty: None,
            lost_student_team: None,
            detection: None,
            known_students: BTreeSet::new(),
            lead_time: Duration::hours(24),
            coverage: CoverageRule::Exact,
            tz,
        }
    }

    pub fn today(&self, now: DateTime<Utc>) -> NaiveDate {
        now.with_timezone(&self.tz).date_naive()
    }

    fn shift(&self, id: &crate::model::ShiftId) -> Result<&Shift, ModelError> {
        self.shifts.iter().find(|s| &s.id == id).ok_or_else(|| ModelError::UnknownShift(id.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionPhase {
    Onboarding,
    Proactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum OpsCommand {
    SetSchedule { schedule: Schedule },
    SubmitRequest { request: NewSwapRequest },
    ClaimRequest { id: RequestId },
    ResolveRequest { id: RequestId, resolution: Resolution },
    EscalateRequest { id: RequestId },
    /// Escalates every open request inside the lead time.
    EscalateDue,
    RunReverts { as_of: NaiveDate },
    Detect { records: Vec<StudentRecord>, phase: DetectionPhase, as_of: NaiveDate },
    ReportStudent { student_id: StudentId, reporter: TaId },
    TriageCase { id: CaseId },
    ContactCase { id: CaseId, on: Option<NaiveDate> },
    MeetingHeld { id: CaseId, on: Option<NaiveDate> },
    CloseCase { id: CaseId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    ScheduleSet { schedule: Schedule },
    RequestSubmitted { request: SwapRequest },
    /// Claim, resolution, escalation and revert all record the new request.
    RequestUpdated { request: SwapRequest },
    StudentsRegistered { ids: Vec<StudentId> },
    CaseOpened { case: LostStudentCase },
    CaseUpdated { case: LostStudentCase },
}

/// What an event is about; used to answer repeated idempotent submissions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum EventSubject {
    Schedule,
    Request(RequestId),
    Case(CaseId),
    Students,
}

impl Event {
    pub fn subject(&self) -> EventSubject {
        match self {
            Event::ScheduleSet { .. } => EventSubject::Schedule,
            Event::RequestSubmitted { request } | Event::RequestUpdated { request } => {
                EventSubject::Request(request.id.clone())
            }
            Event::StudentsRegistered { .. } => EventSubject::Students,
            Event::CaseOpened { case } | Event::CaseUpdated { case } => EventSubject::Case(case.id.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpsError {
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    LostStudent(#[from] LostStudentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no {what} with id {id}")]
    NotFound { what: &'static str, id: String },
    #[error("no active schedule")]
    NoSchedule,
    #[error("{0}")]
    Rejected(String),
    #[error("{0} is not configured")]
    NotConfigured(&'static str),
    #[error("event log corrupt at seq {seq} (line {line}): {reason}")]
    CorruptLog { seq: u64, line: usize, reason: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for OpsError {
    fn from(e: std::io::Error) -> Self {
        OpsError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpsState {
    pub last_seq: u64,
    /// The weekly template.
    pub schedule: Option<Schedule>,
    pub requests: BTreeMap<RequestId, SwapRequest>,
    /// Resolutions overlaid on the current template, in resolution order.
    pub overlays: Vec<RequestId>,
    pub students: BTreeSet<StudentId>,
    pub cases: BTreeMap<CaseId, LostStudentCase>,
    pub contact_history: ContactHistory,
    pub idempotency: BTreeMap<String, Vec<EventSubject>>,
}

const MAX_OVERLAY_WEEKS: i64 = 60;

impl OpsState {
    pub fn request(&self, id: &RequestId) -> Result<&SwapRequest, OpsError> {
        self.requests.get(id).ok_or_else(|| OpsError::NotFound { what: "swap request", id: id.to_string() })
    }

    pub fn case(&self, id: &CaseId) -> Result<&LostStudentCase, OpsError> {
        self.cases.get(id).ok_or_else(|| OpsError::NotFound { what: "case", id: id.to_string() })
    }

    /// The template with every applicable resolution overlaid, for the week
    /// containing `date`.
    pub fn schedule_for_week(&self, date: NaiveDate) -> Option<Schedule> {
        let monday = week_monday(date);
        let mut schedule = self.schedule.clone()?;
        schedule.week_anchor = monday;
        for id in &self.overlays {
            let request = &self.requests[id];
            if request.applies_in_week(Day::of(request.occurrence_date), monday) {
                if let Some(resolution) = &request.resolution {
                    schedule = apply_resolution(&schedule, request, resolution);
                }
            }
        }
        Some(schedule)
    }

    fn apply(&mut self, record: &EventRecord) {
        self.last_seq = record.seq;
        match &record.event {
            Event::ScheduleSet { schedule } => {
                self.schedule = Some(schedule.clone());
                self.overlays.clear();
            }
            Event::RequestSubmitted { request } => {
                self.requests.insert(request.id.clone(), request.clone());
            }
            Event::RequestUpdated { request } => {
                let was_resolved = self.requests.get(&request.id).is_some_and(|r| r.state == RequestState::Resolved);
                if request.state == RequestState::Resolved && !was_resolved {
                    self.overlays.push(request.id.clone());
                }
                self.requests.insert(request.id.clone(), request.clone());
            }
            Event::StudentsRegistered { ids } => self.students.extend(ids.iter().cloned()),
            Event::CaseOpened { case } | Event::CaseUpdated { case } => {
                self.contact_history.observe(case);
                self.cases.insert(case.id.clone(), case.clone());
            }
        }
        if let Some(key) = &record.idempotency_key {
            let subjects = self.idempotency.entry(key.clone()).or_default();
            let subject = record.event.subject();
            if !subjects.contains(&subject) {
                subjects.push(subject);
            }
        }
    }

    /// Replays `records` onto this state, checking that sequence numbers increase.
    pub fn replay<'a>(&mut self, records: impl IntoIterator<Item = &'a EventRecord>) -> Result<(), OpsError> {
        for (i, record) in records.into_iter().enumerate() {
            if record.seq <= self.last_seq {
                return Err(OpsError::CorruptLog {
                    seq: record.seq,
                    line: i + 1,
                    reason: format!("sequence does not increase after {}", self.last_seq),
                });
            }
            self.apply(record);
        }
        Ok(())
    }

    pub fn from_events<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Result<Self, OpsError> {
        let mut state = OpsState::default();
        state.replay(records)?;
        Ok(state)
    }

    fn next_id(&self, prefix: &str, offset: usize) -> String {
        format!("{prefix}-{}", self.last_seq + 1 + offset as u64)
    }

    fn occurrence_start(&self, ctx: &OpsContext, request: &SwapRequest) -> Result<DateTime<Utc>, OpsError> {
        let shift = ctx.shift(&request.shift_id)?;
        Ok(local_instant(request.occurrence_date, shift.slot.start_minute, ctx.tz))
    }

    fn check(&self, ctx: &OpsContext, schedule: &Schedule) -> Result<(), OpsError> {
        let violations = check_schedule_with(schedule, &ctx.roster, &ctx.shifts, ctx.coverage)?;
        if violations.is_empty() {
            Ok(())
        } else {
            let listed: Vec<String> = violations.iter().take(5).map(ToString::to_string).collect();
            Err(OpsError::Rejected(format!(
                "schedule has {} violation(s): {}",
                violations.len(),
                listed.join("; ")
            )))
        }
    }

    fn resolve_request(
        &self,
        ctx: &OpsContext,
        request: &SwapRequest,
        resolution: Resolution,
    ) -> Result<SwapRequest, OpsError> {
        let schedule = self.schedule_for_week(request.occurrence_date).ok_or(OpsError::NoSchedule)?;
        let (resolved, _) = resolve(request, resolution, &schedule, &ctx.roster, &ctx.shifts)?;
        // an open-ended change must hold in every week it covers
        if let Some(until) = resolved.revert_date {
            let mut monday = week_monday(request.occurrence_date) + Duration::days(7);
            let resolution = resolved.resolution.as_ref().expect("resolved request has a resolution");
            let mut weeks = 1;
            while resolved.applies_in_week(Day::of(request.occurrence_date), monday) && weeks < MAX_OVERLAY_WEEKS {
                let week = self.schedule_for_week(monday).ok_or(OpsError::NoSchedule)?;
                let next = apply_resolution(&week, &resolved, resolution);
                self.check(ctx, &next).map_err(|e| {
                    OpsError::Rejected(format!("change until {until} fails in week of {monday}: {e}"))
                })?;
                monday += Duration::days(7);
                weeks += 1;
            }
        }
        Ok(resolved)
    }

    /// Validates `command` and returns the events it produces, without
    /// changing state.
    pub fn execute(&self, ctx: &OpsContext, command: OpsCommand, now: DateTime<Utc>) -> Result<Vec<Event>, OpsError> {
        let today = ctx.today(now);
        let updated = |request: SwapRequest| Ok(vec![Event::RequestUpdated { request }]);
        match command {
            OpsCommand::SetSchedule { schedule } => {
                self.check(ctx, &schedule)?;
                Ok(vec![Event::ScheduleSet { schedule }])
            }
            OpsCommand::SubmitRequest { request } => {
                let schedule = self.schedule_for_week(request.occurrence_date).ok_or(OpsError::NoSchedule)?;
                let id = RequestId(self.next_id("SR", 0));
                let request = submit_request(id, request, &schedule, &ctx.shifts, today, now)?;
                Ok(vec![Event::RequestSubmitted { request }])
            }
            OpsCommand::ClaimRequest { id } => {
                let duty = ctx.duty.as_ref().ok_or(OpsError::NotConfigured("duty roster"))?;
                updated(auto_claim(self.request(&id)?, duty)?)
            }
            OpsCommand::ResolveRequest { id, resolution } => {
                updated(self.resolve_request(ctx, self.request(&id)?, resolution)?)
            }
            OpsCommand::EscalateRequest { id } => {
                let request = self.request(&id)?;
                let next = escalate(request, self.occurrence_start(ctx, request)?, now, ctx.lead_time)?;
                if &next == request {
                    Ok(vec![])
                } else {
                    updated(next)
                }
            }
            OpsCommand::EscalateDue => {
                let mut events = Vec::new();
                for request in self.requests.values().filter(|r| r.state.is_open()) {
                    let next = escalate(request, self.occurrence_start(ctx, request)?, now, ctx.lead_time)?;
                    if &next != request {
                        events.push(Event::RequestUpdated { request: next });
                    }
                }
                Ok(events)
            }
            OpsCommand::RunReverts { as_of } => Ok(due_reverts(self.requests.values(), as_of)
                .into_iter()
                .map(|r| Event::RequestUpdated { request: SwapRequest { reverted: true, ..r } })
                .collect()),
            OpsCommand::Detect { records, phase, as_of } => {
                let config = ctx.detection.as_ref().ok_or(OpsError::NotConfigured("lost-student detection"))?;
                let found = match phase {
                    DetectionPhase::Onboarding => detect_onboarding(&records, config, as_of)?,
                    DetectionPhase::Proactive => detect_proactive(&records, config, as_of)?,
                };
                let mut events = Vec::new();
                let new_students: Vec<StudentId> =
                    records.iter().map(|r| r.student_id.clone()).filter(|id| !self.students.contains(id)).collect();
                if !new_students.is_empty() {
                    events.push(Event::StudentsRegistered { ids: new_students });
                }
                for case in found {
                    let duplicate = self
                        .cases
                        .values()
                        .any(|c| c.student_id == case.student_id && c.trigger == case.trigger && c.state.is_open());
                    if !duplicate {
                        let id = CaseId(self.next_id("LS", events.len()));
                        events.push(Event::CaseOpened { case: LostStudentCase { id, ..case } });
                    }
                }
                Ok(events)
            }
            OpsCommand::ReportStudent { student_id, reporter } => {
                let cases: Vec<LostStudentCase> = self.cases.values().cloned().collect();
                let id = CaseId(self.next_id("LS", 0));
                let students: BTreeSet<StudentId> = self.students.union(&ctx.known_students).cloned().collect();
                let (case, created) = record_report(&student_id, &reporter, &students, &cases, id, today)?;
                Ok(if created { vec![Event::CaseOpened { case }] } else { vec![] })
            }
            OpsCommand::TriageCase { id } => {
                let team = ctx.lost_student_team.as_ref().ok_or(OpsError::NotConfigured("lost-student team"))?;
                let config = ctx.detection.as_ref().ok_or(OpsError::NotConfigured("lost-student detection"))?;
                let case = triage(self.case(&id)?, &self.contact_history, team, config, today)?;
                Ok(vec![Event::CaseUpdated { case }])
            }
            OpsCommand::ContactCase { id, on } => {
                Ok(vec![Event::CaseUpdated { case: record_contact(self.case(&id)?, on.unwrap_or(today))? }])
            }
            OpsCommand::MeetingHeld { id, on } => {
                Ok(vec![Event::CaseUpdated { case: record_meeting(self.case(&id)?, on.unwrap_or(today))? }])
            }
            OpsCommand::CloseCase { id } => Ok(vec![Event::CaseUpdated { case: close_case(self.case(&id)?)? }]),
        }
    }

    /// Runs a command end to end: a repeated idempotency key returns the
    /// original subjects; otherwise the events are handed to `persist` and,
    /// once it succeeds, applied.
    pub fn commit(
        &mut self,
        ctx: &OpsContext,
        command: OpsCommand,
        idempotency_key: Option<String>,
        now: DateTime<Utc>,
        persist: impl FnOnce(&[EventRecord]) -> Result<(), OpsError>,
    ) -> Result<Commit, OpsError> {
        if let Some(subjects) = idempotency_key.as_ref().and_then(|k| self.idempotency.get(k)) {
            return Ok(Commit { records: vec![], subjects: subjects.clone(), replayed: true });
        }
        let events = self.execute(ctx, command, now)?;
        let records: Vec<EventRecord> = events
            .into_iter()
            .enumerate()
            .map(|(i, event)| EventRecord {
                seq: self.last_seq + 1 + i as u64,
                ts: now,
                event,
                idempotency_key: idempotency_key.clone(),
            })
            .collect();
        persist(&records)?;
        for record in &records {
            self.apply(record);
        }
        let subjects = records.iter().map(|r| r.event.subject()).collect();
        Ok(Commit { records, subjects, replayed: false })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Commit {
    pub records: Vec<EventRecord>,
    pub subjects: Vec<EventSubject>,
    /// True when an earlier submission with the same idempotency key was found.
    pub replayed: bool,
}

/// Append-only JSON-lines event log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) the log and returns it with its records.
    /// A torn final line, left by a crash mid-append and never acknowledged,
    /// is dropped; any other unreadable line is an error naming its seq.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<EventRecord>), OpsError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() { Self::read(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((EventLog { path, file }, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn read(path: &Path) -> Result<Vec<EventRecord>, OpsError> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut records: Vec<EventRecord> = Vec::new();
        let mut valid_len = 0u64;
        let mut line_no = 0;
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let complete = buf.ends_with('\n');
            let text = buf.trim();
            if text.is_empty() {
                valid_len += n as u64;
                continue;
            }
            let expected = records.last().map_or(1, |r| r.seq + 1);
            match serde_json::from_str::<EventRecord>(text) {
                Ok(record) if records.last().is_none_or(|r| record.seq > r.seq) => {
                    records.push(record);
                    valid_len += n as u64;
                }
                Ok(record) => {
                    return Err(OpsError::CorruptLog {
                        seq: record.seq,
                        line: line_no,
                        reason: format!("sequence does not increase after {}", expected - 1),
                    })
                }
                Err(_) if !complete => {
                    // torn tail: truncate so the next append starts clean
                    OpenOptions::new().write(true).open(path)?.set_len(valid_len)?;
                    break;
                }
                Err(e) => {
                    let seq = serde_json::from_str::<serde_json::Value>(text)
                        .ok()
                        .and_then(|v| v.get("seq").and_then(serde_json::Value::as_u64))
                        .unwrap_or(expected);
                    return Err(OpsError::CorruptLog { seq, line: line_no, reason: e.to_string() });
                }
            }
        }
        Ok(records)
    }

    /// Appends and syncs; returns only once the records are durable.
    pub fn append(&mut self, records: &[EventRecord]) -> Result<(), OpsError> {
        if records.is_empty() {
            return Ok(());
        }
        let mut out = Vec::new();
        for record in records {
            serde_json::to_writer(&mut out, record).map_err(|e| OpsError::Io(e.to_string()))?;
            out.push(b'\n');
        }
        self.file.write_all(&out)?;
        self.file.sync_data()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: OpsState,
}

/// Writes the snapshot atomically (temp file, then rename).
pub fn write_snapshot(path: impl AsRef<Path>, state: &OpsState) -> Result<(), OpsError> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_vec_pretty(&Snapshot { state: state.clone() }).map_err(|e| OpsError::Io(e.to_string()))?;
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&text)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<Option<OpsState>, OpsError> {
    let path = path.as_ref();
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read(path)?;
    let snapshot: Snapshot = serde_json::from_slice(&text).map_err(|e| OpsError::Io(format!("snapshot: {e}")))?;
    Ok(Some(snapshot.state))
}

/// Restores state from an optional snapshot plus the log tail after it. A
/// snapshot ahead of the log is ignored in favour of a full replay.
pub fn restore(snapshot: Option<OpsState>, records: &[EventRecord]) -> Result<OpsState, OpsError> {
    let log_end = records.last().map_or(0, |r| r.seq);
    let mut state = snapshot.filter(|s| s.last_seq <= log_end).unwrap_or_default();
    let from = state.last_seq;
    state.replay(records.iter().filter(|r| r.seq > from))?;
    Ok(state)
}
