//! Minute-grid presence simulation for attendance checks.
//!
//! Everything is in course-local minutes of one September week (UTC-4, no DST
//! change), so the oracle needs no timezone handling of its own.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use courseops_core::attendance::AttendancePolicy;
use courseops_core::{
    standard_profile, Assignment, Day, Modality, Schedule, Shift, ShiftKind, TaRole, TeachingAssistant, WeekSlot,
};
use rand::Rng;

pub const MONDAY: (i32, u32, u32) = (2022, 9, 12);
/// Course-local offset from UTC that week, in hours.
pub const UTC_OFFSET_H: i64 = -4;

pub fn monday() -> NaiveDate {
    NaiveDate::from_ymd_opt(MONDAY.0, MONDAY.1, MONDAY.2).unwrap()
}

#[derive(Debug, Clone)]
pub struct Presence {
    pub name: String,
    /// Local minutes since Monday 00:00, half-open.
    pub join: i64,
    pub leave: i64,
}

#[derive(Debug, Clone)]
pub struct LogCase {
    pub roster: Vec<TeachingAssistant>,
    pub shifts: Vec<Shift>,
    pub schedule: Schedule,
    pub presence: Vec<Presence>,
    pub policy: AttendancePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OracleFlag {
    Absent,
    Late(u32),
    LeftEarly(u32),
}

fn week_minute(day: Day, minute: u16) -> i64 {
    day.offset() * 1440 + i64::from(minute)
}

fn stamp(minute: i64, utc: bool) -> String {
    let (minute, suffix) = if utc { (minute - UTC_OFFSET_H * 60, "Z") } else { (minute, "") };
    let date = monday() + chrono::Duration::days(minute.div_euclid(1440));
    let m = minute.rem_euclid(1440);
    let sep = if utc { 'T' } else { ' ' };
    format!("{date}{sep}{:02}:{:02}:00{suffix}", m / 60, m % 60)
}

/// Renders the presence rows as a session-log CSV, mixing UTC and local stamps.
pub fn to_csv<R: Rng>(rng: &mut R, presence: &[Presence]) -> String {
    let mut out = String::from("meeting_ref,participant_name,join_ts,leave_ts\n");
    for p in presence {
        let utc = rng.gen_bool(0.5);
        out.push_str(&format!("room-{},{},{},{}\n", rng.gen_range(1..4), p.name, stamp(p.join, utc), stamp(p.leave, utc)));
    }
    out
}

pub fn random_case<R: Rng>(rng: &mut R) -> LogCase {
    let names = ["Ada Lovelace", "Alan Turing", "Grace Hopper", "Edsger Dijkstra", "Barbara Liskov", "Donald Knuth"];
    let n = rng.gen_range(1..=names.len());
    let roster: Vec<TeachingAssistant> = (0..n)
        .map(|i| TeachingAssistant {
            id: format!("ta{i}").into(),
            display_name: names[i].into(),
            email: String::new(),
            role: TaRole::Member,
            team_id: "t".into(),
            profile: standard_profile("RegMember12").unwrap(),
            availability: Day::WEEKDAYS.iter().map(|d| WeekSlot::new(*d, 480, 720).unwrap()).collect(),
        })
        .collect();
    let shifts: Vec<Shift> = (0..rng.gen_range(1..6))
        .map(|i| Shift {
            id: format!("s{i}").into(),
            kind: ShiftKind::OfficeHour,
            slot: WeekSlot::new(
                Day::WEEKDAYS[rng.gen_range(0..5)],
                480 + 30 * rng.gen_range(0..20u16),
                30 * rng.gen_range(1..5u16),
            )
            .unwrap(),
            modality: if rng.gen_bool(0.8) { Modality::Online } else { Modality::InPerson },
            required_staff: 1,
            section_ref: None,
        })
        .collect();
    let mut schedule = Schedule::new(monday());
    for shift in &shifts {
        for ta in &roster {
            if rng.gen_bool(0.4) {
                schedule.assignments.insert(Assignment::new(ta.id.clone(), shift.id.clone()));
            }
        }
    }
    let mut presence = Vec::new();
    for a in &schedule.assignments {
        let shift = shifts.iter().find(|s| s.id == a.shift_id).unwrap();
        let name = &roster.iter().find(|t| t.id == a.ta_id).unwrap().display_name;
        let start = week_minute(shift.slot.day, shift.slot.start_minute);
        let end = start + i64::from(shift.slot.duration_min);
        for _ in 0..rng.gen_range(0..4) {
            let join = rng.gen_range(start - 30..end + 10);
            let leave = join + rng.gen_range(0..90);
            // vary how the name was typed
            let typed = match rng.gen_range(0..3) {
                0 => name.to_lowercase(),
                1 => name.replace(' ', "  "),
                _ => name.clone(),
            };
            presence.push(Presence { name: typed, join, leave });
        }
    }
    for _ in 0..rng.gen_range(0..3) {
        let join = rng.gen_range(480..1200);
        presence.push(Presence { name: "Guest User".into(), join, leave: join + 30 });
    }
    let threshold = |rng: &mut R| match rng.gen_range(0..10) {
        0 => 0,
        1 => AttendancePolicy::NEVER,
        _ => rng.gen_range(1..20),
    };
    let policy = AttendancePolicy {
        late_threshold_min: threshold(rng),
        early_leave_threshold_min: threshold(rng),
        ..Default::default()
    };
    LogCase { roster, shifts, schedule, presence, policy }
}

fn fold_name(name: &str) -> String {
    name.to_lowercase().split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" ")
}

/// Flags per (day offset, shift id, ta id), by marking every present minute.
pub fn minute_grid_flags(case: &LogCase) -> BTreeSet<(i64, String, String, OracleFlag)> {
    let mut by_ta: BTreeMap<String, Vec<&Presence>> = BTreeMap::new();
    for p in &case.presence {
        if let Some(ta) = case.roster.iter().find(|t| fold_name(&t.display_name) == fold_name(&p.name)) {
            by_ta.entry(ta.id.to_string()).or_default().push(p);
        }
    }
    let mut out = BTreeSet::new();
    for a in &case.schedule.assignments {
        let shift = case.shifts.iter().find(|s| s.id == a.shift_id).unwrap();
        if shift.modality != Modality::Online {
            continue;
        }
        let start = week_minute(shift.slot.day, shift.slot.start_minute);
        let len = i64::from(shift.slot.duration_min);
        let rows = by_ta.get(a.ta_id.as_str()).cloned().unwrap_or_default();
        let present: Vec<bool> = (0..len)
            .map(|m| rows.iter().any(|p| p.join <= start + m && start + m < p.leave))
            .collect();
        let key = |f| (shift.slot.day.offset(), shift.id.to_string(), a.ta_id.to_string(), f);
        let Some(first) = present.iter().position(|&p| p) else {
            out.insert(key(OracleFlag::Absent));
            continue;
        };
        let last = present.iter().rposition(|&p| p).unwrap();
        let late = first as u32;
        let early = (len as usize - 1 - last) as u32;
        if u64::from(late) > u64::from(case.policy.late_threshold_min) {
            out.insert(key(OracleFlag::Late(late)));
        }
        if u64::from(early) > u64::from(case.policy.early_leave_threshold_min) {
            out.insert(key(OracleFlag::LeftEarly(early)));
        }
    }
    out
}
