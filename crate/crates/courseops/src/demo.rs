//! A ready-to-serve demo course: the reference-scale planted instance, a
//! solved schedule already recorded in the event log, and sample LMS and
//! session-log inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use courseops_core::io::{write_deliverables_csv, write_duty_csv, write_roster_csv, write_schedule_csv, write_shifts_csv};
use courseops_core::lost_students::{Deliverable, DeliverableKind};
use courseops_core::ops::{EventLog, OpsCommand, OpsState};
use courseops_core::synthetic::{planted_instance, CourseShape};
use courseops_core::{generate_schedule, local_instant, week_monday, Day, Modality, Schedule, SolveOutcome, TaId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::data::{CourseData, DELIVERABLES, DUTY, EVENTS, ROSTER, SESSIONS, SHIFTS};

pub const STUDENTS: usize = 240;

#[derive(Debug, Clone)]
pub struct DemoSummary {
    pub term_start: NaiveDate,
    pub tas: usize,
    pub shifts: usize,
    pub assignments: usize,
    pub students: usize,
}

fn catalog(term_start: NaiveDate) -> Vec<Deliverable> {
    let mut out = Vec::new();
    for i in 1..=10u32 {
        let week = term_start + Duration::weeks(i64::from(i));
        out.push(Deliverable { kind: DeliverableKind::Lab, index: i, due_date: week + Duration::days(1), max_score: 10.0 });
        out.push(Deliverable { kind: DeliverableKind::Quiz, index: i, due_date: week + Duration::days(3), max_score: 5.0 });
    }
    out.push(Deliverable { kind: DeliverableKind::Midterm, index: 1, due_date: term_start + Duration::weeks(5) + Duration::days(2), max_score: 100.0 });
    out.push(Deliverable { kind: DeliverableKind::Midterm, index: 2, due_date: term_start + Duration::weeks(10) + Duration::days(2), max_score: 100.0 });
    out
}

/// An LMS export as of `today`: deliverables not yet due are blank.
fn lms_export(rng: &mut ChaCha8Rng, catalog: &[Deliverable], term_start: NaiveDate, today: NaiveDate) -> String {
    let mut out = String::from("student_id,enrollment_date,first_lms_access,discord_joined");
    for d in catalog {
        let _ = write!(out, ",{},{}", d.score_column(), d.submitted_column());
    }
    out.push('\n');
    for s in 0..STUDENTS {
        let struggling = rng.gen_bool(0.12);
        let enrolled = term_start + Duration::days(if rng.gen_bool(0.05) { rng.gen_range(8..15) } else { rng.gen_range(-5..3) });
        let access = if rng.gen_bool(0.04) {
            String::new()
        } else {
            format!("{}T10:00:00Z", enrolled.max(term_start) + Duration::days(rng.gen_range(0..4)))
        };
        let _ = write!(out, "S{:05},{enrolled},{access},{}", 10_000 + s, rng.gen_bool(0.9));
        for d in catalog {
            if d.due_date > today {
                out.push_str(",,no");
                continue;
            }
            let submitted = rng.gen_bool(if struggling { 0.5 } else { 0.95 });
            let score = if submitted {
                let frac: f64 = if struggling { rng.gen_range(0.1..0.7) } else { rng.gen_range(0.55..1.0) };
                format!("{}/{}", (frac * d.max_score).round(), d.max_score)
            } else {
                String::new()
            };
            let _ = write!(out, ",{score},{}", if submitted { "yes" } else { "no" });
        }
        out.push('\n');
    }
    out
}

/// A week of online office-hour attendance with some late arrivals,
/// early departures and no-shows.
fn session_log(rng: &mut ChaCha8Rng, data: &CourseData, schedule: &Schedule, monday: NaiveDate, config: &Config) -> String {
    let mut out = String::from("meeting_ref,participant_name,join_ts,leave_ts\n");
    for a in &schedule.assignments {
        let Some(shift) = data.shifts.iter().find(|s| s.id == a.shift_id) else { continue };
        if schedule.effective_modality(shift) != Modality::Online || rng.gen_bool(0.05) {
            continue;
        }
        let name = &data.roster.iter().find(|t| t.id == a.ta_id).expect("assigned TA is on the roster").display_name;
        let date = monday + Duration::days(shift.slot.day.offset());
        let start = local_instant(date, shift.slot.start_minute, config.timezone);
        let end = start + Duration::minutes(i64::from(shift.slot.duration_min));
        let late = if rng.gen_bool(0.1) { rng.gen_range(11..25) } else { rng.gen_range(-5..3) };
        let early = if rng.gen_bool(0.08) { rng.gen_range(11..20) } else { rng.gen_range(-3..2) };
        let stamp = |t: DateTime<Utc>| t.format("%Y-%m-%dT%H:%M:%SZ").to_string();
        let _ = writeln!(
            out,
            "{},{name},{},{}",
            shift.id,
            stamp(start + Duration::minutes(late)),
            stamp(end - Duration::minutes(early))
        );
    }
    out
}

/// Writes the demo course into `dir` with a term starting this week.
pub fn write_demo(dir: &Path, seed: u64, today: NaiveDate) -> Result<DemoSummary, String> {
    let term_start = week_monday(today);
    std::fs::create_dir_all(dir.join(SESSIONS)).map_err(|e| e.to_string())?;
    if dir.join(EVENTS).exists() {
        return Err(format!("{} already holds an event log; choose an empty directory", dir.display()));
    }
    let inst = planted_instance(&CourseShape::default(), seed, term_start);
    let mut config = Config { data_dir: ".".into(), term_start: Some(term_start), ..Config::default() };
    config.add_drop_date = Some(term_start + Duration::days(13));
    config.lost_student_team = Some("F3".into());
    let solved = generate_schedule(&inst.roster, &inst.shifts, &config.solver(), term_start).map_err(|e| e.to_string())?;
    let SolveOutcome::Feasible { schedule } = solved else {
        return Err("the demo instance did not solve".into());
    };

    // the scheduling team's members each own one weekday
    let duty: BTreeMap<Day, TaId> = Day::WEEKDAYS.iter().enumerate().map(|(i, d)| (*d, TaId(format!("f5-m{}", i + 1)))).collect();
    let catalog = catalog(term_start);
    let write = |name: &str, text: String| std::fs::write(dir.join(name), text).map_err(|e| format!("{name}: {e}"));
    write(ROSTER, write_roster_csv(&inst.roster))?;
    write(SHIFTS, write_shifts_csv(&inst.shifts))?;
    write(DUTY, write_duty_csv(&duty))?;
    write(DELIVERABLES, write_deliverables_csv(&catalog))?;
    write("schedule.csv", write_schedule_csv(&schedule))?;
    write("courseops.conf", config.to_text())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let as_of = term_start + Duration::weeks(6);
    write("lms_export.csv", lms_export(&mut rng, &catalog, term_start, as_of))?;
    let data = CourseData::load(dir).map_err(|e| e.to_string())?;
    write(&format!("{SESSIONS}/{term_start}.csv"), session_log(&mut rng, &data, &schedule, term_start, &config))?;

    // record the schedule so a fresh service starts with it
    let ctx = data.context(&config).map_err(|e| e.to_string())?;
    let (mut log, _) = EventLog::open(dir.join(EVENTS)).map_err(|e| e.to_string())?;
    let mut state = OpsState::default();
    let now = local_instant(term_start, 0, config.timezone);
    let assignments = schedule.assignments.len();
    state
        .commit(&ctx, OpsCommand::SetSchedule { schedule }, Some("demo-schedule".into()), now, |r| log.append(r))
        .map_err(|e| e.to_string())?;

    Ok(DemoSummary { term_start, tas: inst.roster.len(), shifts: inst.shifts.len(), assignments, students: STUDENTS })
}
