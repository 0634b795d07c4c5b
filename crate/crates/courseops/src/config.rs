//! Plain-text `key = value` configuration with `COURSEOPS_*` environment
//! overrides. Later sources win: defaults, then the file, then the
//! environment, then command-line flags (applied by the caller).

use std::fmt;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use chrono_tz::Tz;
use courseops_core::attendance::{AttendancePolicy, NameResolution};
use courseops_core::lost_students::{Cutoffs, DetectionConfig, StreakMode};
use courseops_core::{CoverageRule, SolverConfig};
use thiserror::Error;

pub const ENV_PREFIX: &str = "COURSEOPS_";

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub port: u16,
    pub bind: IpAddr,
    pub data_dir: PathBuf,
    /// Course timezone; storage stays UTC.
    pub timezone: Tz,
    pub attendance: AttendancePolicy,
    pub escalation_lead_hours: i64,
    pub term_start: Option<NaiveDate>,
    pub term_weeks: u32,
    pub add_drop_date: Option<NaiveDate>,
    pub late_join_days: i64,
    pub n_labs: usize,
    pub m_quizzes: usize,
    pub k_midterms: usize,
    pub cutoffs: Cutoffs,
    pub streak_mode: StreakMode,
    pub cooldown_days: i64,
    /// Team whose members are assigned lost-student cases.
    pub lost_student_team: Option<String>,
    pub solver_seed: u64,
    pub solver_time_limit_ms: u64,
    pub overcover_allowed: bool,
    /// Write a snapshot after this many events (0 = only on shutdown).
    pub snapshot_every: u64,
    /// Seconds between automatic escalation and revert sweeps (0 = off).
    pub tick_secs: u64,
}

impl Default for Config {
    fn default() -> Self {
        let attendance = AttendancePolicy::default();
        Config {
            port: 8080,
            bind: IpAddr::from([127, 0, 0, 1]),
            data_dir: PathBuf::from("."),
            timezone: chrono_tz::America::Toronto,
            attendance,
            escalation_lead_hours: 24,
            term_start: None,
            term_weeks: 13,
            add_drop_date: None,
            late_join_days: 7,
            n_labs: 2,
            m_quizzes: 2,
            k_midterms: 1,
            cutoffs: Cutoffs::default(),
            streak_mode: StreakMode::AllOf,
            cooldown_days: 14,
            lost_student_team: None,
            solver_seed: 0,
            solver_time_limit_ms: 60_000,
            overcover_allowed: false,
            snapshot_every: 100,
            tick_secs: 60,
        }
    }
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Env(String),
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Env(var) => write!(f, "environment variable {var}"),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{origin}: unknown key {key:?}")]
    UnknownKey { key: String, origin: Origin },
    #[error("{origin}: bad value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String, origin: Origin },
    #[error("{origin}: expected key = value")]
    Syntax { origin: Origin },
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

fn parse<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

fn parse_fraction(value: &str) -> Result<f64, String> {
    let v: f64 = parse(value)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must be between 0 and 1".into())
    }
}

fn parse_threshold(value: &str) -> Result<u32, String> {
    if value.eq_ignore_ascii_case("never") {
        Ok(AttendancePolicy::NEVER)
    } else {
        parse(value)
    }
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn optional<T>(value: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, String> {
    if value.is_empty() {
        Ok(None)
    } else {
        f(value).map(Some)
    }
}

impl Config {
    /// Applies one setting. Keys are case-insensitive.
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        match self.assign(&key, value) {
            None => Err(ConfigError::UnknownKey { key, origin }),
            Some(Ok(())) => Ok(()),
            Some(Err(reason)) => Err(ConfigError::BadValue { key, value: value.to_string(), reason, origin }),
        }
    }

    /// `None` for an unknown key.
    fn assign(&mut self, key: &str, value: &str) -> Option<Result<(), String>> {
        let result = (|| {
            match key {
                "port" => self.port = parse(value)?,
                "bind" => self.bind = parse(value)?,
                "data_dir" => self.data_dir = PathBuf::from(value),
                "timezone" => self.timezone = value.parse::<Tz>().map_err(|e| e.to_string())?,
                "late_threshold_min" => self.attendance.late_threshold_min = parse_threshold(value)?,
                "early_leave_threshold_min" => self.attendance.early_leave_threshold_min = parse_threshold(value)?,
                "name_resolution" => {
                    self.attendance.name_resolution = match value.to_ascii_lowercase().as_str() {
                        "exact" => NameResolution::Exact,
                        "normalized" | "normalised" => NameResolution::Normalized,
                        _ => return Err("expected exact or normalized".into()),
                    }
                }
                "escalation_lead_hours" => self.escalation_lead_hours = parse(value)?,
                "term_start" => self.term_start = optional(value, parse)?,
                "term_weeks" => self.term_weeks = parse(value)?,
                "add_drop_date" => self.add_drop_date = optional(value, parse)?,
                "late_join_days" => self.late_join_days = parse(value)?,
                "n_labs" => self.n_labs = parse(value)?,
                "m_quizzes" => self.m_quizzes = parse(value)?,
                "k_midterms" => self.k_midterms = parse(value)?,
                "lab_cutoff" => self.cutoffs.lab = parse_fraction(value)?,
                "quiz_cutoff" => self.cutoffs.quiz = parse_fraction(value)?,
                "midterm_cutoff" => self.cutoffs.midterm = parse_fraction(value)?,
                "streak_mode" => {
                    self.streak_mode = match value.to_ascii_lowercase().replace('-', "_").as_str() {
                        "all_of" | "all" => StreakMode::AllOf,
                        "any_of" | "any" => StreakMode::AnyOf,
                        _ => return Err("expected all_of or any_of".into()),
                    }
                }
                "cooldown_days" => self.cooldown_days = parse(value)?,
                "lost_student_team" => self.lost_student_team = optional(value, |v| Ok(v.to_string()))?,
                "solver_seed" => self.solver_seed = parse(value)?,
                "solver_time_limit_ms" => self.solver_time_limit_ms = parse(value)?,
                "overcover_allowed" => self.overcover_allowed = parse_bool(value)?,
                "snapshot_every" => self.snapshot_every = parse(value)?,
                "tick_secs" => self.tick_secs = parse(value)?,
                _ => return Ok(false),
            }
            Ok(true)
        })();
        match result {
            Ok(false) => None,
            Ok(true) => Some(Ok(())),
            Err(reason) => Some(Err(reason)),
        }
    }

    /// Applies a `key = value` document. Blank lines and `#` comments are
    /// skipped; a relative `data_dir` is taken relative to the file.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File { path: path.to_path_buf(), line: i + 1 };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { origin: origin.clone() })?;
            if key.trim().is_empty() {
                return Err(ConfigError::Syntax { origin });
            }
            self.set(key, value, origin)?;
            if key.trim().eq_ignore_ascii_case("data_dir") && self.data_dir.is_relative() {
                if let Some(parent) = path.parent() {
                    self.data_dir = parent.join(&self.data_dir);
                }
            }
        }
        Ok(())
    }

    /// Applies every `COURSEOPS_*` variable; `COURSEOPS_LATE_THRESHOLD_MIN`
    /// sets `late_threshold_min`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (var, value) in vars {
            let key = var[ENV_PREFIX.len()..].to_ascii_lowercase();
            self.set(&key, &value, Origin::Env(var.clone()))?;
        }
        Ok(())
    }

    /// Defaults, then `file` if given, then the process environment.
    pub fn load(file: Option<&Path>) -> Result<Config, ConfigError> {
        Self::load_with_env(file, std::env::vars())
    }

    pub fn load_with_env(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Config, ConfigError> {
        let mut config = Config::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Read { path: path.to_path_buf(), reason: e.to_string() })?;
            config.apply_text(&text, path)?;
        }
        config.apply_env(env)?;
        Ok(config)
    }

    pub fn lead_time(&self) -> Duration {
        Duration::hours(self.escalation_lead_hours)
    }

    pub fn coverage(&self) -> CoverageRule {
        CoverageRule::from_overcover_allowed(self.overcover_allowed)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            seed: self.solver_seed,
            time_limit_ms: self.solver_time_limit_ms,
            overcover_allowed: self.overcover_allowed,
            ..SolverConfig::default()
        }
    }

    /// Lost-student detection settings, available once the term dates are set.
    pub fn detection(&self) -> Option<DetectionConfig> {
        let (term_start, add_drop) = (self.term_start?, self.add_drop_date?);
        let mut d = DetectionConfig::new(term_start, add_drop);
        d.n_labs = self.n_labs;
        d.m_quizzes = self.m_quizzes;
        d.k_midterms = self.k_midterms;
        d.cutoff_fraction = self.cutoffs;
        d.cooldown_days = self.cooldown_days;
        d.late_join_days = self.late_join_days;
        d.mode = self.streak_mode;
        Some(d)
    }

    /// Renders every key in file form; loading the output gives this config back.
    pub fn to_text(&self) -> String {
        let threshold = |m: u32| if m == AttendancePolicy::NEVER { "never".to_string() } else { m.to_string() };
        let date = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
        let rows = [
            ("port", self.port.to_string()),
            ("bind", self.bind.to_string()),
            ("data_dir", self.data_dir.display().to_string()),
            ("timezone", self.timezone.name().to_string()),
            ("late_threshold_min", threshold(self.attendance.late_threshold_min)),
            ("early_leave_threshold_min", threshold(self.attendance.early_leave_threshold_min)),
            (
                "name_resolution",
                match self.attendance.name_resolution {
                    NameResolution::Exact => "exact",
                    NameResolution::Normalized => "normalized",
                }
                .into(),
            ),
            ("escalation_lead_hours", self.escalation_lead_hours.to_string()),
            ("term_start", date(self.term_start)),
            ("term_weeks", self.term_weeks.to_string()),
            ("add_drop_date", date(self.add_drop_date)),
            ("late_join_days", self.late_join_days.to_string()),
            ("n_labs", self.n_labs.to_string()),
            ("m_quizzes", self.m_quizzes.to_string()),
            ("k_midterms", self.k_midterms.to_string()),
            ("lab_cutoff", self.cutoffs.lab.to_string()),
            ("quiz_cutoff", self.cutoffs.quiz.to_string()),
            ("midterm_cutoff", self.cutoffs.midterm.to_string()),
            (
                "streak_mode",
                match self.streak_mode {
                    StreakMode::AllOf => "all_of",
                    StreakMode::AnyOf => "any_of",
                }
                .into(),
            ),
            ("cooldown_days", self.cooldown_days.to_string()),
            ("lost_student_team", self.lost_student_team.clone().unwrap_or_default()),
            ("solver_seed", self.solver_seed.to_string()),
            ("solver_time_limit_ms", self.solver_time_limit_ms.to_string()),
            ("overcover_allowed", self.overcover_allowed.to_string()),
            ("snapshot_every", self.snapshot_every.to_string()),
            ("tick_secs", self.tick_secs.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
