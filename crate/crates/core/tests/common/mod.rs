//! Independent reference implementations used to cross-check the library.
//!
//! Nothing here calls into the code paths it checks: constraints are tested
//! minute by minute, schedules are enumerated exhaustively, and rule checks
//! are re-derived from their plain definitions.

#![allow(dead_code)]

pub mod attendance_oracle;
pub mod ics_reader;
pub mod instances;
pub mod lost_oracle;
pub mod workflow_sim;

use std::collections::BTreeMap;

use courseops_core::{
    Assignment, Schedule, Shift, Subject, TeachingAssistant, Violation, ViolationKind,
};

fn covers_minute(slot: &courseops_core::WeekSlot, day: courseops_core::Day, minute: u16) -> bool {
    slot.day == day && slot.start_minute <= minute && minute < slot.start_minute + slot.duration_min
}

fn hours_text(minutes: i64) -> String {
    format!("{}", minutes as f64 / 60.0)
}

/// Checks each constraint by direct enumeration over minutes and pairs.
pub fn brute_force_check(
    schedule: &Schedule,
    roster: &[TeachingAssistant],
    shifts: &[Shift],
    exact: bool,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let find_shift = |id: &courseops_core::ShiftId| shifts.iter().find(|s| &s.id == id).unwrap();

    for shift in shifts {
        let count = schedule
            .assignments
            .iter()
            .filter(|a| a.shift_id == shift.id)
            .count() as u32;
        if count < shift.required_staff {
            out.push(Violation {
                kind: ViolationKind::Undercovered,
                subject: Subject::Shift(shift.id.clone()),
                detail: format!("assigned {count} < required {}", shift.required_staff),
            });
        }
        if exact && count > shift.required_staff {
            out.push(Violation {
                kind: ViolationKind::Overcovered,
                subject: Subject::Shift(shift.id.clone()),
                detail: format!("assigned {count} > required {}", shift.required_staff),
            });
        }
    }

    for ta in roster {
        let mine: Vec<&Shift> = schedule
            .assignments
            .iter()
            .filter(|a| a.ta_id == ta.id)
            .map(|a| find_shift(&a.shift_id))
            .collect();
        for i in 0..mine.len() {
            for j in 0..mine.len() {
                if mine[i].id >= mine[j].id {
                    continue;
                }
                let own = mine[i].slot.start_minute..mine[i].slot.start_minute + mine[i].slot.duration_min;
                let clash = own.into_iter().any(|m| {
                    covers_minute(&mine[i].slot, mine[i].slot.day, m)
                        && covers_minute(&mine[j].slot, mine[i].slot.day, m)
                });
                if clash {
                    out.push(Violation {
                        kind: ViolationKind::Overlap,
                        subject: Subject::Ta(ta.id.clone()),
                        detail: format!("{} overlaps {}", mine[i].id, mine[j].id),
                    });
                }
            }
            let s = mine[i];
            let available = (s.slot.start_minute..s.slot.start_minute + s.slot.duration_min)
                .all(|m| ta.availability.iter().any(|a| covers_minute(a, s.slot.day, m)));
            if !available {
                out.push(Violation {
                    kind: ViolationKind::Unavailable,
                    subject: Subject::Ta(ta.id.clone()),
                    detail: format!("{} at {}", s.id, s.slot.token()),
                });
            }
        }
        let minutes: i64 = mine.iter().map(|s| i64::from(s.slot.duration_min)).sum();
        let budget = i64::from(ta.profile.regular_task_hours.0) * 30;
        if minutes > budget {
            out.push(Violation {
                kind: ViolationKind::BudgetExceeded,
                subject: Subject::Ta(ta.id.clone()),
                detail: format!("{} > {}", hours_text(minutes), hours_text(budget)),
            });
        }
    }
    out.sort();
    out
}

/// Result of exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    Infeasible,
    /// Enumeration exceeded its node cap.
    Undecided,
}

/// Enumerates every staffing of every shift (in input order) with exactly the
/// required headcount, discarding a branch as soon as the brute-force checker
/// reports a violation that no further assignment can repair.
pub fn exhaustive_verdict(roster: &[TeachingAssistant], shifts: &[Shift], node_cap: u64) -> Verdict {
    let mut nodes = 0u64;
    let mut partial = Vec::new();
    match enumerate(roster, shifts, 0, &mut partial, &mut nodes, node_cap) {
        Some(true) => Verdict::Feasible,
        Some(false) => Verdict::Infeasible,
        None => Verdict::Undecided,
    }
}

fn enumerate(
    roster: &[TeachingAssistant],
    shifts: &[Shift],
    depth: usize,
    partial: &mut Vec<Assignment>,
    nodes: &mut u64,
    cap: u64,
) -> Option<bool> {
    *nodes += 1;
    if *nodes > cap {
        return None;
    }
    let schedule = Schedule::with_assignments(anchor(), partial.iter().cloned());
    let violations = brute_force_check(&schedule, roster, &shifts[..depth], true);
    let repairable = violations
        .iter()
        .all(|v| matches!(v.kind, ViolationKind::Undercovered | ViolationKind::Overcovered));
    if !repairable {
        return Some(false);
    }
    if depth == shifts.len() {
        return Some(violations.is_empty());
    }
    let shift = &shifts[depth];
    let n = roster.len();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() != shift.required_staff {
            continue;
        }
        let before = partial.len();
        for (t, ta) in roster.iter().enumerate() {
            if mask & (1 << t) != 0 {
                partial.push(Assignment::new(ta.id.clone(), shift.id.clone()));
            }
        }
        let found = enumerate(roster, shifts, depth + 1, partial, nodes, cap);
        partial.truncate(before);
        match found {
            Some(true) => return Some(true),
            Some(false) => {}
            None => return None,
        }
    }
    Some(false)
}

pub fn anchor() -> chrono::NaiveDate {
    chrono::NaiveDate::from_ymd_opt(2022, 9, 5).unwrap()
}

/// Hours assigned per TA, by plain summation.
pub fn assigned_minutes(schedule: &Schedule, shifts: &[Shift]) -> BTreeMap<String, i64> {
    let mut out = BTreeMap::new();
    for a in &schedule.assignments {
        let s = shifts.iter().find(|s| s.id == a.shift_id).unwrap();
        *out.entry(a.ta_id.to_string()).or_insert(0) += i64::from(s.slot.duration_min);
    }
    out
}
