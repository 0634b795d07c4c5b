//! Read models shared by the HTTP API and the CLI.

use std::fmt::Write as _;

use chrono::NaiveDate;
use courseops_core::{Day, Modality, Schedule, Shift, ShiftId, ShiftKind, TaId, TeachingAssistant};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Covered,
    Undercovered,
    Overcovered,
}

/// One shift's staffing in a given week.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageCell {
    pub shift_id: ShiftId,
    pub kind: ShiftKind,
    pub day: Day,
    /// Local wall-clock start, `HH:MM`.
    pub start: String,
    pub duration_min: u16,
    /// After any modality change in effect that week.
    pub modality: Modality,
    pub required_staff: u32,
    pub staff: Vec<TaId>,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section_ref: Option<String>,
}

pub fn clock(minute: u16) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

/// Cells in day, start, id order.
pub fn coverage_cells(schedule: &Schedule, shifts: &[Shift]) -> Vec<CoverageCell> {
    let mut ordered: Vec<&Shift> = shifts.iter().collect();
    ordered.sort_by(|a, b| (a.slot, &a.id).cmp(&(b.slot, &b.id)));
    ordered
        .into_iter()
        .map(|s| {
            let staff: Vec<TaId> = schedule.staff_of(&s.id).cloned().collect();
            let n = staff.len() as u32;
            CoverageCell {
                shift_id: s.id.clone(),
                kind: s.kind,
                day: s.slot.day,
                start: clock(s.slot.start_minute),
                duration_min: s.slot.duration_min,
                modality: schedule.effective_modality(s),
                required_staff: s.required_staff,
                staff,
                status: match n.cmp(&s.required_staff) {
                    std::cmp::Ordering::Less => CellStatus::Undercovered,
                    std::cmp::Ordering::Equal => CellStatus::Covered,
                    std::cmp::Ordering::Greater => CellStatus::Overcovered,
                },
                section_ref: s.section_ref.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WeekView {
    pub week: NaiveDate,
    pub has_schedule: bool,
    pub undercovered: usize,
    pub cells: Vec<CoverageCell>,
}

impl WeekView {
    pub fn new(week: NaiveDate, schedule: Option<&Schedule>, shifts: &[Shift]) -> WeekView {
        let cells = schedule.map(|s| coverage_cells(s, shifts)).unwrap_or_default();
        WeekView {
            week,
            has_schedule: schedule.is_some(),
            undercovered: cells.iter().filter(|c| c.status == CellStatus::Undercovered).count(),
            cells,
        }
    }
}

/// A plain-text per-day coverage table followed by per-TA load.
pub fn coverage_summary(schedule: &Schedule, shifts: &[Shift], roster: &[TeachingAssistant]) -> String {
    let cells = coverage_cells(schedule, shifts);
    let mut out = String::new();
    let _ = writeln!(out, "{:<5}{:>8}{:>10}{:>9}{:>8}", "day", "shifts", "required", "staffed", "short");
    for day in Day::ALL {
        let today: Vec<&CoverageCell> = cells.iter().filter(|c| c.day == day).collect();
        if today.is_empty() {
            continue;
        }
        let required: u32 = today.iter().map(|c| c.required_staff).sum();
        let staffed: usize = today.iter().map(|c| c.staff.len()).sum();
        let short = today.iter().filter(|c| c.status == CellStatus::Undercovered).count();
        let _ = writeln!(out, "{:<5}{:>8}{:>10}{:>9}{:>8}", day.abbrev(), today.len(), required, staffed, short);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<16}{:>8}{:>8}", "ta", "hours", "budget");
    for ta in roster {
        let minutes: i64 = schedule
            .shifts_of(&ta.id)
            .filter_map(|id| shifts.iter().find(|s| &s.id == id))
            .map(Shift::minutes)
            .sum();
        let _ = writeln!(
            out,
            "{:<16}{:>8}{:>8}",
            ta.id.as_str(),
            courseops_core::format_minutes_as_hours(minutes),
            courseops_core::format_minutes_as_hours(ta.profile.regular_minutes())
        );
    }
    out
}
