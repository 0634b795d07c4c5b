//! Command-line front end. Every subcommand prints a human summary, or with
//! `--json` a single JSON document; failures exit nonzero and, in JSON mode,
//! print `{"error": {"kind", "message"}}`.

use std::fmt::Write as _;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use chrono::{Local, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use courseops_core::attendance::{evaluate_attendance, parse_session_log, AttendanceError, FlagKind};
use courseops_core::ics::export_ics;
use courseops_core::io::{read_deliverables_csv, read_roster_csv, read_shifts_csv, write_schedule_csv};
use courseops_core::lost_students::{detect_onboarding, detect_proactive, ingest_lms_export};
use courseops_core::{generate_schedule, plan_org, week_monday, PlannerParams, SolveError, SolveOutcome, TaId};
use serde_json::{json, Value};

use crate::config::Config;
use crate::data::{load_schedule, read_file, DELIVERABLES, ROSTER, SHIFTS};
use crate::views::coverage_summary;

pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_TIME_LIMIT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "courseops", version, about = "Staffing, scheduling and early-warning tools for large courses")]
pub struct Cli {
    /// key = value configuration file; COURSEOPS_* variables override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print one JSON document instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Size the TA staff and team structure for an enrollment.
    Plan(PlanArgs),
    /// Build a weekly TA schedule from a roster and shift list.
    Solve(SolveArgs),
    /// Flag students who may be falling behind from an LMS export.
    Detect(DetectArgs),
    /// Check a week of online session logs against the schedule.
    Attendance(AttendanceArgs),
    /// Export one TA's shifts as an iCalendar file.
    Ics(IcsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a ready-to-serve demo course into a directory.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub students: u32,
    /// Students per TA.
    #[arg(long, visible_alias = "ratio")]
    pub students_per_ta: Option<u32>,
    #[arg(long)]
    pub team_size: Option<u32>,
    #[arg(long)]
    pub functional_teams: Option<u32>,
    #[arg(long)]
    pub students_per_regular_team: Option<u32>,
    #[arg(long)]
    pub students_per_instructor: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub roster: Option<PathBuf>,
    #[arg(long)]
    pub shifts: Option<PathBuf>,
    /// Monday of the first week the schedule applies to (default: this week).
    #[arg(long)]
    pub week: Option<NaiveDate>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "MS")]
    pub time_limit: Option<u64>,
    /// Where to write the schedule CSV.
    #[arg(long, default_value = "schedule.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Phase {
    Onboarding,
    Proactive,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// LMS gradebook export (CSV).
    #[arg(long)]
    pub lms: PathBuf,
    #[arg(long)]
    pub as_of: Option<NaiveDate>,
    /// Default: onboarding up to the add/drop date, proactive after.
    #[arg(long, value_enum)]
    pub phase: Option<Phase>,
    #[arg(long)]
    pub deliverables: Option<PathBuf>,
    /// Where to write the flagged cases as JSON.
    #[arg(long, default_value = "cases.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttendanceArgs {
    /// Participant log (CSV).
    #[arg(long)]
    pub log: PathBuf,
    /// Any date in the week the log covers.
    #[arg(long)]
    pub week: NaiveDate,
    #[arg(long)]
    pub roster: Option<PathBuf>,
    #[arg(long)]
    pub shifts: Option<PathBuf>,
    #[arg(long, default_value = "schedule.csv")]
    pub schedule: PathBuf,
    /// Where to write the report as JSON.
    #[arg(long, default_value = "flags.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IcsArgs {
    #[arg(long)]
    pub ta: String,
    #[arg(long, default_value = "schedule.csv")]
    pub schedule: PathBuf,
    #[arg(long)]
    pub roster: Option<PathBuf>,
    #[arg(long)]
    pub shifts: Option<PathBuf>,
    #[arg(long)]
    pub term_start: Option<NaiveDate>,
    #[arg(long)]
    pub weeks: Option<u32>,
    /// Write the calendar here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<IpAddr>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    /// Extra fields for the JSON error body.
    pub detail: Option<Value>,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError { code: EXIT_ERROR, kind, message: message.into(), detail: None }
    }

    pub fn to_json(&self) -> Value {
        let mut body = json!({ "kind": self.kind, "message": self.message });
        if let Some(Value::Object(extra)) = &self.detail {
            body.as_object_mut().expect("object").extend(extra.clone());
        }
        json!({ "error": body })
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::new("invalid_input", e.to_string())
}

/// What a successful command reports.
pub struct Output {
    pub text: String,
    pub json: Value,
}

fn path_or(dir: &Path, given: &Option<PathBuf>, default: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| dir.join(default))
}

fn resolve(dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        path.to_path_buf()
    } else {
        dir.join(path)
    }
}

fn write_out(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

pub fn load_config(cli: &Cli) -> Result<Config, CliError> {
    Config::load(cli.config.as_deref()).map_err(|e| CliError::new("config", e.to_string()))
}

/// Runs every subcommand except `serve`, which the binary drives itself.
pub fn run(command: &Command, config: &Config, today: NaiveDate) -> Result<Output, CliError> {
    match command {
        Command::Plan(args) => plan(args),
        Command::Solve(args) => solve(args, config, today),
        Command::Detect(args) => detect(args, config, today),
        Command::Attendance(args) => attendance(args, config),
        Command::Ics(args) => ics(args, config),
        Command::Demo(args) => demo(args, today),
        Command::Serve(_) => Err(CliError { code: EXIT_USAGE, ..CliError::new("usage", "serve is not a one-shot command") }),
    }
}

pub fn local_today() -> NaiveDate {
    Local::now().date_naive()
}

fn plan(args: &PlanArgs) -> Result<Output, CliError> {
    let mut params = PlannerParams::default();
    let set = |slot: &mut u32, value: Option<u32>| {
        if let Some(v) = value {
            *slot = v;
        }
    };
    set(&mut params.students_per_ta, args.students_per_ta);
    set(&mut params.team_size, args.team_size);
    set(&mut params.functional_team_count, args.functional_teams);
    set(&mut params.students_per_regular_team, args.students_per_regular_team);
    set(&mut params.students_per_instructor, args.students_per_instructor);
    let plan = plan_org(args.students, &params).map_err(input)?;
    Ok(Output { text: plan.to_string(), json: serde_json::to_value(&plan).expect("plan serializes") })
}

fn solve(args: &SolveArgs, config: &Config, today: NaiveDate) -> Result<Output, CliError> {
    let dir = &config.data_dir;
    let roster = read_file(&path_or(dir, &args.roster, ROSTER), read_roster_csv).map_err(input)?;
    let shifts = read_file(&path_or(dir, &args.shifts, SHIFTS), read_shifts_csv).map_err(input)?;
    let mut solver = config.solver();
    if let Some(seed) = args.seed {
        solver.seed = seed;
    }
    if let Some(ms) = args.time_limit {
        solver.time_limit_ms = ms;
    }
    let week = week_monday(args.week.unwrap_or(today));
    match generate_schedule(&roster, &shifts, &solver, week) {
        Ok(SolveOutcome::Feasible { schedule }) => {
            let mut text = coverage_summary(&schedule, &shifts, &roster);
            write_out(&args.out, &write_schedule_csv(&schedule))?;
            let _ = writeln!(text, "schedule written to {}", args.out.display());
            Ok(Output { text, json: json!({ "status": "feasible", "schedule": schedule }) })
        }
        Ok(SolveOutcome::Infeasible { report }) => {
            let mut message = format!("no feasible schedule ({:?} proof)", report.proof_kind);
            if !report.uncovered_shift_ids.is_empty() {
                let ids: Vec<&str> = report.uncovered_shift_ids.iter().map(|s| s.as_str()).collect();
                let _ = write!(message, "; cannot cover {}", ids.join(", "));
            }
            if !report.tight_tas.is_empty() {
                let tight: Vec<String> = report.tight_tas.iter().map(|t| format!("{:?}", t)).collect();
                let _ = write!(message, "; tight: {}", tight.join(", "));
            }
            Err(CliError {
                code: EXIT_INFEASIBLE,
                kind: "infeasible",
                message,
                detail: Some(json!({ "report": report })),
            })
        }
        Err(e @ SolveError::TimeLimitExceeded { .. }) => {
            Err(CliError { code: EXIT_TIME_LIMIT, ..CliError::new("time_limit_exceeded", e.to_string()) })
        }
        Err(e) => Err(input(e)),
    }
}

fn detect(args: &DetectArgs, config: &Config, today: NaiveDate) -> Result<Output, CliError> {
    let detection = config
        .detection()
        .ok_or_else(|| CliError::new("not_configured", "term_start and add_drop_date must be configured"))?;
    let catalog = read_file(&path_or(&config.data_dir, &args.deliverables, DELIVERABLES), read_deliverables_csv).map_err(input)?;
    let lms = resolve(&config.data_dir, &args.lms);
    let import = read_file(&lms, |text| ingest_lms_export(text, &catalog, config.timezone)).map_err(input)?;
    let as_of = args.as_of.unwrap_or(today);
    let phase = args.phase.unwrap_or(if as_of <= detection.add_drop_date { Phase::Onboarding } else { Phase::Proactive });
    let cases = match phase {
        Phase::Onboarding => detect_onboarding(&import.records, &detection, as_of),
        Phase::Proactive => detect_proactive(&import.records, &detection, as_of),
    }
    .map_err(input)?;
    let body = json!({ "as_of": as_of, "students": import.records.len(), "cases": cases, "rejects": import.rejects });
    let mut text = format!("{} students read, {} rows rejected, {} flagged as of {as_of}\n", import.records.len(), import.rejects.len(), cases.len());
    for case in &cases {
        let _ = writeln!(text, "  {:<12} {}", case.student_id, serde_json::to_string(&case.trigger).expect("trigger serializes"));
    }
    for reject in &import.rejects {
        let _ = writeln!(text, "  rejected {reject:?}");
    }
    write_out(&args.out, &serde_json::to_string_pretty(&cases).expect("cases serialize"))?;
    Ok(Output { text, json: body })
}

fn attendance(args: &AttendanceArgs, config: &Config) -> Result<Output, CliError> {
    let dir = &config.data_dir;
    let roster = read_file(&path_or(dir, &args.roster, ROSTER), read_roster_csv).map_err(input)?;
    let shifts = read_file(&path_or(dir, &args.shifts, SHIFTS), read_shifts_csv).map_err(input)?;
    let monday = week_monday(args.week);
    let schedule = load_schedule(&resolve(dir, &args.schedule), monday).map_err(input)?;
    let (entries, rejects) = read_file(&resolve(dir, &args.log), |text| match parse_session_log(text, config.timezone) {
        Ok(log) => Ok((log.entries, log.rejects)),
        Err(AttendanceError::EmptyInput { rejects }) => Ok((vec![], rejects)),
        Err(e) => Err(e),
    })
    .map_err(input)?;
    let report = evaluate_attendance(&entries, &schedule, &roster, &shifts, &config.attendance, monday, config.timezone).map_err(input)?;
    let mut text = format!("week of {monday}: {} flags, {} log rows rejected\n", report.flags.len(), rejects.len());
    for f in &report.flags {
        let what = match f.kind {
            FlagKind::Absent => "absent".to_string(),
            FlagKind::Late(m) => format!("late {m} min"),
            FlagKind::LeftEarly(m) => format!("left {m} min early"),
        };
        let _ = writeln!(text, "  {} {:<12} {:<14} {what}", f.occurrence_date, f.ta_id, f.shift_id);
    }
    for note in &report.notes {
        let _ = writeln!(text, "  note: {}", serde_json::to_string(note).expect("note serializes"));
    }
    let body = json!({ "week": monday, "flags": report.flags, "notes": report.notes, "rejects": rejects });
    write_out(&args.out, &serde_json::to_string_pretty(&body).expect("report serializes"))?;
    Ok(Output { text, json: body })
}

fn ics(args: &IcsArgs, config: &Config) -> Result<Output, CliError> {
    let dir = &config.data_dir;
    let term_start = args
        .term_start
        .or(config.term_start)
        .ok_or_else(|| CliError::new("not_configured", "pass --term-start or configure term_start"))?;
    let weeks = args.weeks.unwrap_or(config.term_weeks);
    let roster = read_file(&path_or(dir, &args.roster, ROSTER), read_roster_csv).map_err(input)?;
    let shifts = read_file(&path_or(dir, &args.shifts, SHIFTS), read_shifts_csv).map_err(input)?;
    let schedule = load_schedule(&resolve(dir, &args.schedule), week_monday(term_start)).map_err(input)?;
    let ta = TaId(args.ta.clone());
    let calendar = export_ics(&ta, &schedule, &roster, &shifts, term_start, weeks).map_err(|e| CliError::new("not_found", e.to_string()))?;
    let events = calendar.matches("BEGIN:VEVENT").count();
    let json = json!({ "ta": ta, "events": events, "ics": calendar });
    match &args.out {
        Some(out) => {
            write_out(out, &calendar)?;
            Ok(Output { text: format!("{events} events for {ta} written to {}\n", out.display()), json })
        }
        None => Ok(Output { text: calendar, json }),
    }
}

fn demo(args: &DemoArgs, today: NaiveDate) -> Result<Output, CliError> {
    let summary = crate::demo::write_demo(&args.out, args.seed, today).map_err(|e| CliError::new("io", e))?;
    let text = format!(
        "demo course in {}: {} TAs, {} shifts, {} assignments, {} students; term starts {}\n\
         serve it with: courseops --config {} serve\n",
        args.out.display(),
        summary.tas,
        summary.shifts,
        summary.assignments,
        summary.students,
        summary.term_start,
        args.out.join("courseops.conf").display()
    );
    let json = json!({
        "dir": args.out,
        "tas": summary.tas,
        "shifts": summary.shifts,
        "assignments": summary.assignments,
        "students": summary.students,
        "term_start": summary.term_start,
    });
    Ok(Output { text, json })
}
