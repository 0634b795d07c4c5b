//! Course data read from the data directory. Every file is optional so that a
//! service can start on an empty directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use courseops_core::io::{read_deliverables_csv, read_duty_csv, read_roster_csv, read_schedule_csv, read_shifts_csv};
use courseops_core::lost_students::Deliverable;
use courseops_core::ops::OpsContext;
use courseops_core::{Day, DutyRoster, Schedule, Shift, TaId, TaRole, Team, TeamKind, TeachingAssistant};
use thiserror::Error;

use crate::config::Config;

pub const ROSTER: &str = "roster.csv";
pub const SHIFTS: &str = "shifts.csv";
pub const DUTY: &str = "duty.csv";
pub const DELIVERABLES: &str = "deliverables.csv";
pub const EVENTS: &str = "events.jsonl";
pub const SNAPSHOT: &str = "snapshot.json";
/// Session logs live here as `<monday>.csv`.
pub const SESSIONS: &str = "sessions";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
}

fn read_optional(path: &Path) -> Result<Option<String>, DataError> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(DataError::File { path: path.to_path_buf(), reason: e.to_string() }),
    }
}

/// Reads `path` and parses it, tagging any error with the file name.
pub fn read_file<T, E: std::fmt::Display>(path: &Path, parse: impl FnOnce(&str) -> Result<T, E>) -> Result<T, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::File { path: path.to_path_buf(), reason: e.to_string() })?;
    parse(&text).map_err(|e| DataError::File { path: path.to_path_buf(), reason: e.to_string() })
}

fn parse_optional<T, E: std::fmt::Display>(
    path: &Path,
    parse: impl FnOnce(&str) -> Result<T, E>,
) -> Result<Option<T>, DataError> {
    match read_optional(path)? {
        None => Ok(None),
        Some(text) => parse(&text).map(Some).map_err(|e| DataError::File { path: path.to_path_buf(), reason: e.to_string() }),
    }
}

#[derive(Debug, Clone, Default)]
pub struct CourseData {
    pub roster: Vec<TeachingAssistant>,
    pub shifts: Vec<Shift>,
    pub duty: Option<BTreeMap<Day, TaId>>,
    pub deliverables: Vec<Deliverable>,
}

impl CourseData {
    pub fn load(dir: &Path) -> Result<CourseData, DataError> {
        Ok(CourseData {
            roster: parse_optional(&dir.join(ROSTER), read_roster_csv)?.unwrap_or_default(),
            shifts: parse_optional(&dir.join(SHIFTS), read_shifts_csv)?.unwrap_or_default(),
            duty: parse_optional(&dir.join(DUTY), read_duty_csv)?,
            deliverables: parse_optional(&dir.join(DELIVERABLES), read_deliverables_csv)?.unwrap_or_default(),
        })
    }

    /// The configured team as listed in the roster: its lead plus members.
    pub fn team(&self, team_id: &str) -> Result<Team, DataError> {
        let people: Vec<&TeachingAssistant> = self.roster.iter().filter(|t| t.team_id.as_str() == team_id).collect();
        let lead = people
            .iter()
            .find(|t| t.role == TaRole::Lead)
            .ok_or_else(|| DataError::Invalid(format!("team {team_id} has no lead in the roster")))?;
        let members = people.iter().filter(|t| t.role == TaRole::Member).map(|t| t.id.clone()).collect();
        Team::new(team_id.into(), TeamKind::Regular, lead.id.clone(), members).map_err(|e| DataError::Invalid(e.to_string()))
    }

    pub fn context(&self, config: &Config) -> Result<OpsContext, DataError> {
        let mut ctx = OpsContext::new(self.roster.clone(), self.shifts.clone(), config.timezone);
        if let Some(duty) = &self.duty {
            for ta in duty.values() {
                if !self.roster.iter().any(|t| &t.id == ta) {
                    return Err(DataError::Invalid(format!("{DUTY}: {ta} is not in the roster")));
                }
            }
            ctx.duty = Some(DutyRoster::new(duty.clone()).map_err(|e| DataError::Invalid(format!("{DUTY}: {e}")))?);
        }
        if let Some(team) = &config.lost_student_team {
            ctx.lost_student_team = Some(self.team(team)?);
        }
        ctx.detection = config.detection();
        ctx.lead_time = config.lead_time();
        ctx.coverage = config.coverage();
        Ok(ctx)
    }
}

pub fn load_schedule(path: &Path, week_anchor: chrono::NaiveDate) -> Result<Schedule, DataError> {
    read_file(path, |text| read_schedule_csv(text, week_anchor))
}
