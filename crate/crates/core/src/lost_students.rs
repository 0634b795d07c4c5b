//! Early-warning pipeline for students falling behind: LMS ingestion,
//! onboarding and grade-based detection, triage with a contact cooldown, and
//! the per-case contact/meeting lifecycle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attendance::parse_timestamp;
use crate::error::RowReject;
use crate::model::{CaseId, StudentId, TaId, Team};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeliverableKind {
    Lab,
    Quiz,
    Midterm,
}

impl DeliverableKind {
    pub const ALL: [DeliverableKind; 3] = [DeliverableKind::Lab, DeliverableKind::Quiz, DeliverableKind::Midterm];

    /// Column prefix in LMS exports.
    pub fn prefix(self) -> &'static str {
        match self {
            DeliverableKind::Lab => "lab",
            DeliverableKind::Quiz => "quiz",
            DeliverableKind::Midterm => "midterm",
        }
    }
}

impl fmt::Display for DeliverableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeCell {
    pub deliverable_kind: DeliverableKind,
    pub index: u32,
    pub due_date: NaiveDate,
    pub max_score: f64,
    pub score: Option<f64>,
    pub submitted: bool,
}

impl GradeCell {
    /// Unsubmitted, or graded below `cutoff` of the maximum. Submitted work
    /// that has not been graded yet does not count as failing.
    pub fn is_failing(&self, cutoff: f64) -> bool {
        !self.submitted || self.score.is_some_and(|s| s < cutoff * self.max_score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub student_id: StudentId,
    pub enrollment_date: NaiveDate,
    pub first_lms_access: Option<DateTime<Utc>>,
    pub discord_joined: bool,
    /// Ordered by due date.
    pub grades: Vec<GradeCell>,
}

/// A deliverable known to the course: where its columns are and when it is due.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deliverable {
    pub kind: DeliverableKind,
    pub index: u32,
    pub due_date: NaiveDate,
    pub max_score: f64,
}

impl Deliverable {
    pub fn score_column(&self) -> String {
        format!("{}{}_score", self.kind.prefix(), self.index)
    }

    pub fn submitted_column(&self) -> String {
        format!("{}{}_submitted", self.kind.prefix(), self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreakMode {
    /// Every one of the most recent deliverables must be failing.
    #[default]
    AllOf,
    AnyOf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub lab: f64,
    pub quiz: f64,
    pub midterm: f64,
}

impl Cutoffs {
    pub fn of(&self, kind: DeliverableKind) -> f64 {
        match kind {
            DeliverableKind::Lab => self.lab,
            DeliverableKind::Quiz => self.quiz,
            DeliverableKind::Midterm => self.midterm,
        }
    }
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs { lab: 0.5, quiz: 0.5, midterm: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub n_labs: usize,
    pub m_quizzes: usize,
    pub k_midterms: usize,
    pub cutoff_fraction: Cutoffs,
    pub cooldown_days: i64,
    pub term_start: NaiveDate,
    pub add_drop_date: NaiveDate,
    /// Enrolling more than this many days after term start is a late join.
    pub late_join_days: i64,
    pub mode: StreakMode,
}

impl DetectionConfig {
    pub fn new(term_start: NaiveDate, add_drop_date: NaiveDate) -> Self {
        DetectionConfig {
            n_labs: 2,
            m_quizzes: 2,
            k_midterms: 1,
            cutoff_fraction: Cutoffs::default(),
            cooldown_days: 14,
            term_start,
            add_drop_date,
            late_join_days: 7,
            mode: StreakMode::AllOf,
        }
    }

    pub fn window(&self, kind: DeliverableKind) -> usize {
        match kind {
            DeliverableKind::Lab => self.n_labs,
            DeliverableKind::Quiz => self.m_quizzes,
            DeliverableKind::Midterm => self.k_midterms,
        }
    }

    pub fn validate(&self) -> Result<(), LostStudentError> {
        for kind in DeliverableKind::ALL {
            if self.window(kind) == 0 {
                return Err(LostStudentError::Config(format!("{kind} window must be at least 1")));
            }
            let c = self.cutoff_fraction.of(kind);
            if !(0.0..=1.0).contains(&c) {
                return Err(LostStudentError::Config(format!("{kind} cutoff {c} is outside [0, 1]")));
            }
        }
        if self.cooldown_days < 0 || self.late_join_days < 0 {
            return Err(LostStudentError::Config("day counts must be non-negative".into()));
        }
        if self.add_drop_date < self.term_start {
            return Err(LostStudentError::Config("add/drop date precedes term start".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "detail")]
pub enum Trigger {
    LateJoin,
    NoLmsAccess,
    NoDiscord,
    ProactiveRule(DeliverableKind),
    Reported(TaId),
}

impl Trigger {
    fn slug(&self) -> String {
        match self {
            Trigger::LateJoin => "late-join".into(),
            Trigger::NoLmsAccess => "no-lms".into(),
            Trigger::NoDiscord => "no-discord".into(),
            Trigger::ProactiveRule(kind) => format!("rule-{kind}"),
            Trigger::Reported(by) => format!("report-{by}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "detail")]
pub enum CaseState {
    Identified,
    /// Recently contacted; left alone for now.
    Skipped,
    Assigned(TaId),
    Contacted(NaiveDate),
    MeetingHeld(NaiveDate),
    Closed,
}

impl CaseState {
    pub fn name(&self) -> &'static str {
        match self {
            CaseState::Identified => "identified",
            CaseState::Skipped => "skipped",
            CaseState::Assigned(_) => "assigned",
            CaseState::Contacted(_) => "contacted",
            CaseState::MeetingHeld(_) => "meeting_held",
            CaseState::Closed => "closed",
        }
    }

    pub fn is_open(&self) -> bool {
        !matches!(self, CaseState::Skipped | CaseState::Closed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LostStudentCase {
    pub id: CaseId,
    pub student_id: StudentId,
    pub trigger: Trigger,
    pub state: CaseState,
    pub identified_on: NaiveDate,
    #[serde(default)]
    pub assignee: Option<TaId>,
    #[serde(default)]
    pub contacted_on: Option<NaiveDate>,
    #[serde(default)]
    pub meeting_on: Option<NaiveDate>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl LostStudentCase {
    pub fn identified(id: CaseId, student_id: StudentId, trigger: Trigger, on: NaiveDate) -> Self {
        LostStudentCase {
            id,
            student_id,
            trigger,
            state: CaseState::Identified,
            identified_on: on,
            assignee: None,
            contacted_on: None,
            meeting_on: None,
            notes: Vec::new(),
        }
    }
}

/// When each student was last contacted and who received the last assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactHistory {
    pub last_contact: BTreeMap<StudentId, NaiveDate>,
    pub last_assignee: Option<TaId>,
}

impl ContactHistory {
    /// Folds a case's outcome into the history.
    pub fn observe(&mut self, case: &LostStudentCase) {
        if let CaseState::Assigned(ta) = &case.state {
            self.last_assignee = Some(ta.clone());
        }
        if let Some(d) = case.contacted_on {
            let last = self.last_contact.entry(case.student_id.clone()).or_insert(d);
            *last = (*last).max(d);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionStats {
    pub contacted: usize,
    pub meetings: usize,
    pub rate_pct: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LmsImport {
    pub records: Vec<StudentRecord>,
    pub rejects: Vec<RowReject>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LostStudentError {
    #[error("LMS export is missing column {0:?}")]
    SchemaError(String),
    #[error("LMS export: {0}")]
    Csv(String),
    #[error("unknown student {0}")]
    UnknownStudent(StudentId),
    #[error("{phase} detection needs as_of {requirement} the add/drop date {add_drop}")]
    WrongPhase { phase: &'static str, requirement: &'static str, add_drop: NaiveDate },
    #[error("case {id} is {state} and cannot be {action}")]
    WrongState { id: CaseId, state: &'static str, action: &'static str },
    #[error("team {0} has no members to assign")]
    NoMembers(String),
    #[error("detection config: {0}")]
    Config(String),
}

fn parse_bool(text: &str) -> Option<bool> {
    match text.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "y" | "1" => Some(true),
        "false" | "no" | "n" | "0" | "" => Some(false),
        _ => None,
    }
}

fn parse_date(text: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d").map_err(|_| format!("bad date {text:?}"))
}

fn parse_access(text: &str, tz: Tz) -> Result<Option<DateTime<Utc>>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    if let Ok(d) = parse_date(text) {
        return parse_timestamp(&format!("{d} 00:00"), tz).map(Some);
    }
    parse_timestamp(text, tz).map(Some)
}

/// Parses `8` or `8/10`; the denominator, when present, must match the catalog.
fn parse_score(text: &str, max: f64) -> Result<Option<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (text, None),
    };
    let score: f64 = num.trim().parse().map_err(|_| format!("bad score {text:?}"))?;
    if let Some(den) = den {
        let den: f64 = den.trim().parse().map_err(|_| format!("bad score {text:?}"))?;
        if den != max {
            return Err(format!("score {text} is out of {den}, expected {max}"));
        }
    }
    if !score.is_finite() || score < 0.0 || score > max {
        return Err(format!("score {text} outside 0..={max}"));
    }
    Ok(Some(score))
}

const BASE_COLUMNS: [&str; 4] = ["student_id", "enrollment_date", "first_lms_access", "discord_joined"];

/// Reads a wide LMS export, one row per student and a score/submitted column
/// pair per catalog deliverable. Every data row yields a record or a reject.
pub fn ingest_lms_export(csv_text: &str, catalog: &[Deliverable], tz: Tz) -> Result<LmsImport, LostStudentError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| LostStudentError::Csv(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| LostStudentError::SchemaError(name.to_string()))
    };
    let base = BASE_COLUMNS.map(column);
    let base: Vec<usize> = base.into_iter().collect::<Result<_, _>>()?;
    let mut ordered: Vec<&Deliverable> = catalog.iter().collect();
    ordered.sort_by_key(|a| (a.due_date, a.kind, a.index));
    let cells: Vec<(&Deliverable, usize, usize)> = ordered
        .into_iter()
        .map(|d| Ok((d, column(&d.score_column())?, column(&d.submitted_column())?)))
        .collect::<Result<_, LostStudentError>>()?;

    let mut import = LmsImport::default();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                import.rejects.push(RowReject { line, reason: e.to_string() });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let parsed = (|| {
            let student_id = field(base[0]);
            if student_id.is_empty() {
                return Err("empty student_id".to_string());
            }
            if !seen.insert(student_id.to_string()) {
                return Err(format!("duplicate student {student_id}"));
            }
            let discord_joined =
                parse_bool(field(base[3])).ok_or_else(|| format!("bad discord_joined {:?}", field(base[3])))?;
            let mut grades = Vec::with_capacity(cells.len());
            for (d, score_col, submitted_col) in &cells {
                let score = parse_score(field(*score_col), d.max_score)?;
                let submitted = parse_bool(field(*submitted_col))
                    .ok_or_else(|| format!("bad {} {:?}", d.submitted_column(), field(*submitted_col)))?;
                if score.is_some() && !submitted {
                    return Err(format!("{} is graded but not submitted", d.score_column()));
                }
                grades.push(GradeCell {
                    deliverable_kind: d.kind,
                    index: d.index,
                    due_date: d.due_date,
                    max_score: d.max_score,
                    score,
                    submitted,
                });
            }
            Ok(StudentRecord {
                student_id: student_id.into(),
                enrollment_date: parse_date(field(base[1]))?,
                first_lms_access: parse_access(field(base[2]), tz)?,
                discord_joined,
                grades,
            })
        })();
        match parsed {
            Ok(r) => import.records.push(r),
            Err(reason) => import.rejects.push(RowReject { line, reason }),
        }
    }
    Ok(import)
}

fn detected(student: &StudentId, trigger: Trigger, as_of: NaiveDate) -> LostStudentCase {
    let id = CaseId(format!("{student}:{}:{as_of}", trigger.slug()));
    LostStudentCase::identified(id, student.clone(), trigger, as_of)
}

/// Onboarding-phase checks: late enrollment, no LMS access, not on Discord.
/// Emits one case per criterion met.
pub fn detect_onboarding(
    records: &[StudentRecord],
    config: &DetectionConfig,
    as_of: NaiveDate,
) -> Result<Vec<LostStudentCase>, LostStudentError> {
    if as_of > config.add_drop_date {
        return Err(LostStudentError::WrongPhase {
            phase: "onboarding",
            requirement: "on or before",
            add_drop: config.add_drop_date,
        });
    }
    let late_after = config.term_start + Duration::days(config.late_join_days);
    let mut cases = Vec::new();
    for r in records {
        if r.enrollment_date > late_after {
            cases.push(detected(&r.student_id, Trigger::LateJoin, as_of));
        }
        if r.first_lms_access.is_none_or(|t| t.date_naive() > as_of) {
            cases.push(detected(&r.student_id, Trigger::NoLmsAccess, as_of));
        }
        if !r.discord_joined {
            cases.push(detected(&r.student_id, Trigger::NoDiscord, as_of));
        }
    }
    Ok(cases)
}

/// Which grade rule fires for `record`, checking labs, quizzes and midterms in that order.
pub fn proactive_rule(record: &StudentRecord, config: &DetectionConfig, as_of: NaiveDate) -> Option<DeliverableKind> {
    DeliverableKind::ALL.into_iter().find(|&kind| {
        let window = config.window(kind);
        let mut due: Vec<&GradeCell> = record
            .grades
            .iter()
            .filter(|g| g.deliverable_kind == kind && g.due_date <= as_of)
            .collect();
        if due.len() < window {
            return false;
        }
        due.sort_by_key(|g| (g.due_date, g.index));
        let recent = &due[due.len() - window..];
        let cutoff = config.cutoff_fraction.of(kind);
        match config.mode {
            StreakMode::AllOf => recent.iter().all(|g| g.is_failing(cutoff)),
            StreakMode::AnyOf => recent.iter().any(|g| g.is_failing(cutoff)),
        }
    })
}

/// Grade-based detection after add/drop: one case per flagged student.
pub fn detect_proactive(
    records: &[StudentRecord],
    config: &DetectionConfig,
    as_of: NaiveDate,
) -> Result<Vec<LostStudentCase>, LostStudentError> {
    if as_of <= config.add_drop_date {
        return Err(LostStudentError::WrongPhase {
            phase: "proactive",
            requirement: "after",
            add_drop: config.add_drop_date,
        });
    }
    Ok(records
        .iter()
        .filter_map(|r| {
            proactive_rule(r, config, as_of).map(|kind| detected(&r.student_id, Trigger::ProactiveRule(kind), as_of))
        })
        .collect())
}

fn wrong_state(case: &LostStudentCase, action: &'static str) -> LostStudentError {
    LostStudentError::WrongState { id: case.id.clone(), state: case.state.name(), action }
}

/// Skips students contacted within the cooldown; otherwise assigns the case
/// to the next team member after the previous assignee, in id order.
pub fn triage(
    case: &LostStudentCase,
    history: &ContactHistory,
    team: &Team,
    config: &DetectionConfig,
    today: NaiveDate,
) -> Result<LostStudentCase, LostStudentError> {
    if case.state != CaseState::Identified {
        return Err(wrong_state(case, "triaged"));
    }
    let mut next = case.clone();
    if let Some(last) = history.last_contact.get(&case.student_id) {
        if (today - *last).num_days() < config.cooldown_days {
            next.state = CaseState::Skipped;
            next.notes.push(format!("skipped: last contacted {last}"));
            return Ok(next);
        }
    }
    let members = team.members_by_id();
    let ta = match &history.last_assignee {
        Some(prev) => members.iter().find(|m| *m > prev).or(members.first()),
        None => members.first(),
    }
    .ok_or_else(|| LostStudentError::NoMembers(team.id.to_string()))?;
    next.state = CaseState::Assigned(ta.clone());
    next.assignee = Some(ta.clone());
    Ok(next)
}

pub fn record_contact(case: &LostStudentCase, on: NaiveDate) -> Result<LostStudentCase, LostStudentError> {
    let CaseState::Assigned(_) = case.state else {
        return Err(wrong_state(case, "contacted"));
    };
    Ok(LostStudentCase { state: CaseState::Contacted(on), contacted_on: Some(on), ..case.clone() })
}

pub fn record_meeting(case: &LostStudentCase, on: NaiveDate) -> Result<LostStudentCase, LostStudentError> {
    let CaseState::Contacted(_) = case.state else {
        return Err(wrong_state(case, "marked as met"));
    };
    Ok(LostStudentCase { state: CaseState::MeetingHeld(on), meeting_on: Some(on), ..case.clone() })
}

pub fn close_case(case: &LostStudentCase) -> Result<LostStudentCase, LostStudentError> {
    match case.state {
        CaseState::Skipped | CaseState::Contacted(_) | CaseState::MeetingHeld(_) => {
            Ok(LostStudentCase { state: CaseState::Closed, ..case.clone() })
        }
        _ => Err(wrong_state(case, "closed")),
    }
}

/// Opens a reported case, or returns the student's already open reported case.
/// The boolean is true when a new case was created.
pub fn record_report(
    student_id: &StudentId,
    reporter: &TaId,
    students: &BTreeSet<StudentId>,
    cases: &[LostStudentCase],
    new_id: CaseId,
    today: NaiveDate,
) -> Result<(LostStudentCase, bool), LostStudentError> {
    if !students.contains(student_id) {
        return Err(LostStudentError::UnknownStudent(student_id.clone()));
    }
    let open = cases
        .iter()
        .find(|c| &c.student_id == student_id && matches!(c.trigger, Trigger::Reported(_)) && c.state.is_open());
    if let Some(existing) = open {
        return Ok((existing.clone(), false));
    }
    let case = LostStudentCase::identified(new_id, student_id.clone(), Trigger::Reported(reporter.clone()), today);
    Ok((case, true))
}

/// Percentage rounded half up, 0 when `whole` is 0.
pub fn percent_half_up(part: usize, whole: usize) -> u32 {
    if whole == 0 {
        return 0;
    }
    ((200 * part as u64 + whole as u64) / (2 * whole as u64)) as u32
}

pub fn conversion_stats(cases: &[LostStudentCase]) -> ConversionStats {
    let contacted = cases.iter().filter(|c| c.contacted_on.is_some()).count();
    let meetings = cases.iter().filter(|c| c.meeting_on.is_some()).count();
    ConversionStats { contacted, meetings, rate_pct: percent_half_up(meetings, contacted) }
}
