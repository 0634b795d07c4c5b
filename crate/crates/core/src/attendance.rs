//! Attendance checks for online office hours from videoconference logs.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ModelError, RowReject};
use crate::model::{index_shifts, local_instant, week_monday, Modality, Schedule, Shift, ShiftId, TaId, TeachingAssistant};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    pub meeting_ref: String,
    pub participant_name: String,
    #[serde(default)]
    pub ta_id: Option<TaId>,
    pub join_ts: DateTime<Utc>,
    pub leave_ts: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameResolution {
    Exact,
    /// Case-insensitive, with runs of whitespace collapsed.
    #[default]
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttendancePolicy {
    /// Minutes; [`AttendancePolicy::NEVER`] disables the check.
    pub late_threshold_min: u32,
    pub early_leave_threshold_min: u32,
    pub name_resolution: NameResolution,
}

impl AttendancePolicy {
    pub const NEVER: u32 = u32::MAX;
}

impl Default for AttendancePolicy {
    fn default() -> Self {
        AttendancePolicy {
            late_threshold_min: 10,
            early_leave_threshold_min: 10,
            name_resolution: NameResolution::Normalized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "minutes")]
pub enum FlagKind {
    Absent,
    Late(u32),
    LeftEarly(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttendanceFlag {
    pub occurrence_date: NaiveDate,
    pub shift_id: ShiftId,
    pub ta_id: TaId,
    #[serde(flatten)]
    pub kind: FlagKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "snake_case")]
pub enum AttendanceNote {
    /// In-person shift; no log to check against.
    Unmonitored { shift_id: ShiftId },
    UnmatchedParticipant { name: String },
    AmbiguousParticipant { name: String, candidates: Vec<TaId> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttendanceReport {
    pub flags: Vec<AttendanceFlag>,
    pub notes: Vec<AttendanceNote>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLog {
    pub entries: Vec<SessionLogEntry>,
    pub rejects: Vec<RowReject>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttendanceError {
    #[error("session log has no parseable rows ({} rejected)", rejects.len())]
    EmptyInput { rejects: Vec<RowReject> },
    #[error("session log is missing column {0:?}")]
    MissingColumn(String),
    #[error("session log: {0}")]
    Csv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const COLUMNS: [&str; 4] = ["meeting_ref", "participant_name", "join_ts", "leave_ts"];

/// Parses an ISO-8601 timestamp. Values without an offset are local time in `tz`.
pub fn parse_timestamp(text: &str, tz: Tz) -> Result<DateTime<Utc>, String> {
    let text = text.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Ok(t.with_timezone(&Utc));
    }
    let naive = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
        .ok_or_else(|| format!("bad timestamp {text:?}"))?;
    tz.from_local_datetime(&naive)
        .earliest()
        .map(|t| t.with_timezone(&Utc))
        .ok_or_else(|| format!("{text} does not exist in {tz}"))
}

/// Reads a participant log. Bad rows are collected as rejects.
pub fn parse_session_log(csv_text: &str, tz: Tz) -> Result<ParsedLog, AttendanceError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| AttendanceError::Csv(e.to_string()))?.clone();
    let mut col = [0usize; 4];
    for (i, name) in COLUMNS.iter().enumerate() {
        col[i] = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| AttendanceError::MissingColumn(name.to_string()))?;
    }

    let mut log = ParsedLog::default();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                log.rejects.push(RowReject { line, reason: e.to_string() });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(col[i]).unwrap_or("");
        let entry = (|| {
            let participant_name = field(1);
            if participant_name.is_empty() {
                return Err("empty participant_name".to_string());
            }
            let join_ts = parse_timestamp(field(2), tz)?;
            let leave_ts = parse_timestamp(field(3), tz)?;
            if leave_ts < join_ts {
                return Err(format!("leave {leave_ts} before join {join_ts}"));
            }
            Ok(SessionLogEntry {
                meeting_ref: field(0).to_string(),
                participant_name: participant_name.to_string(),
                ta_id: None,
                join_ts,
                leave_ts,
            })
        })();
        match entry {
            Ok(e) => log.entries.push(e),
            Err(reason) => log.rejects.push(RowReject { line, reason }),
        }
    }
    if log.entries.is_empty() {
        return Err(AttendanceError::EmptyInput { rejects: log.rejects });
    }
    Ok(log)
}

fn name_key(name: &str, mode: NameResolution) -> String {
    match mode {
        NameResolution::Exact => name.to_string(),
        NameResolution::Normalized => name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase(),
    }
}

/// Fills in `ta_id` by matching participant names against roster display
/// names. Unmatched and ambiguous names are reported, never guessed.
pub fn resolve_participants(
    entries: &[SessionLogEntry],
    roster: &[TeachingAssistant],
    mode: NameResolution,
) -> (Vec<SessionLogEntry>, Vec<AttendanceNote>) {
    let mut by_name: BTreeMap<String, Vec<TaId>> = BTreeMap::new();
    for ta in roster {
        by_name.entry(name_key(&ta.display_name, mode)).or_default().push(ta.id.clone());
    }
    let mut notes = BTreeSet::new();
    let mut resolved = Vec::with_capacity(entries.len());
    for entry in entries {
        let mut entry = entry.clone();
        if entry.ta_id.is_none() {
            match by_name.get(&name_key(&entry.participant_name, mode)).map(Vec::as_slice) {
                Some([id]) => entry.ta_id = Some(id.clone()),
                Some(many) if many.len() > 1 => {
                    notes.insert(AttendanceNote::AmbiguousParticipant {
                        name: entry.participant_name.clone(),
                        candidates: many.to_vec(),
                    });
                }
                _ => {
                    notes.insert(AttendanceNote::UnmatchedParticipant { name: entry.participant_name.clone() });
                }
            }
        }
        resolved.push(entry);
    }
    (resolved, notes.into_iter().collect())
}

type Interval = (DateTime<Utc>, DateTime<Utc>);

/// Sorts and merges overlapping or touching intervals.
pub fn merge_intervals(mut intervals: Vec<Interval>) -> Vec<Interval> {
    intervals.sort();
    let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
    for (start, end) in intervals {
        match merged.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => merged.push((start, end)),
        }
    }
    merged
}

fn ceil_minutes(d: Duration) -> u64 {
    u64::try_from(d.num_seconds()).unwrap_or(0).div_ceil(60)
}

/// Flags absences, late arrivals and early departures for every online shift
/// occurrence in the week containing `week_of`.
pub fn evaluate_attendance(
    entries: &[SessionLogEntry],
    schedule: &Schedule,
    roster: &[TeachingAssistant],
    shifts: &[Shift],
    policy: &AttendancePolicy,
    week_of: NaiveDate,
    tz: Tz,
) -> Result<AttendanceReport, AttendanceError> {
    let shifts = index_shifts(shifts)?;
    let (entries, mut notes) = resolve_participants(entries, roster, policy.name_resolution);
    let mut presence: BTreeMap<&TaId, Vec<Interval>> = BTreeMap::new();
    for e in &entries {
        if let Some(id) = &e.ta_id {
            presence.entry(id).or_default().push((e.join_ts, e.leave_ts));
        }
    }
    let presence: BTreeMap<&TaId, Vec<Interval>> =
        presence.into_iter().map(|(id, iv)| (id, merge_intervals(iv))).collect();

    let monday = week_monday(week_of);
    let mut flags = Vec::new();
    let mut unmonitored = BTreeSet::new();
    for a in &schedule.assignments {
        let shift = shifts.get(&a.shift_id).ok_or_else(|| ModelError::UnknownShift(a.shift_id.to_string()))?;
        if schedule.effective_modality(shift) != Modality::Online {
            unmonitored.insert(shift.id.clone());
            continue;
        }
        let date = monday + Duration::days(shift.slot.day.offset());
        let start = local_instant(date, shift.slot.start_minute, tz);
        let end = start + Duration::minutes(i64::from(shift.slot.duration_min));
        let within: Vec<Interval> = presence
            .get(&a.ta_id)
            .map(|iv| {
                iv.iter()
                    .map(|(s, e)| ((*s).max(start), (*e).min(end)))
                    .filter(|(s, e)| s < e)
                    .collect()
            })
            .unwrap_or_default();
        let flag = |kind| AttendanceFlag {
            occurrence_date: date,
            shift_id: shift.id.clone(),
            ta_id: a.ta_id.clone(),
            kind,
        };
        let (Some(first), Some(last)) = (within.first(), within.last()) else {
            flags.push(flag(FlagKind::Absent));
            continue;
        };
        let late = ceil_minutes(first.0 - start);
        if late > u64::from(policy.late_threshold_min) {
            flags.push(flag(FlagKind::Late(late as u32)));
        }
        let early = ceil_minutes(end - last.1);
        if early > u64::from(policy.early_leave_threshold_min) {
            flags.push(flag(FlagKind::LeftEarly(early as u32)));
        }
    }
    notes.extend(unmonitored.into_iter().map(|shift_id| AttendanceNote::Unmonitored { shift_id }));
    notes.sort();
    flags.sort();
    Ok(AttendanceReport { flags, notes })
}
