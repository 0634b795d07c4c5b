//! Feasibility checking for a weekly schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{
    format_minutes_as_hours, index_roster, index_shifts, Schedule, Shift, ShiftId, Subject,
    TaId, TeachingAssistant, Violation, ViolationKind,
};

/// How assigned headcount is compared with `required_staff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CoverageRule {
    /// Exactly the required headcount; extra staff is an `Overcovered` violation.
    #[default]
    Exact,
    /// At least the required headcount.
    AtLeast,
}

impl CoverageRule {
    pub fn from_overcover_allowed(allowed: bool) -> Self {
        if allowed {
            CoverageRule::AtLeast
        } else {
            CoverageRule::Exact
        }
    }
}

/// Every constraint violation in `schedule`, canonically ordered.
///
/// An empty result means the schedule is feasible: each shift is staffed with
/// exactly its required headcount, no TA works two overlapping shifts or
/// outside their availability, and no TA exceeds their regular-task budget.
pub fn check_schedule(
    schedule: &Schedule,
    roster: &[TeachingAssistant],
    shifts: &[Shift],
) -> Result<Vec<Violation>, ModelError> {
    check_schedule_with(schedule, roster, shifts, CoverageRule::Exact)
}

pub fn check_schedule_with(
    schedule: &Schedule,
    roster: &[TeachingAssistant],
    shifts: &[Shift],
    coverage: CoverageRule,
) -> Result<Vec<Violation>, ModelError> {
    let tas = index_roster(roster)?;
    let shifts = index_shifts(shifts)?;
    check_indexed(schedule, &tas, &shifts, coverage)
}

pub(crate) fn check_indexed(
    schedule: &Schedule,
    tas: &BTreeMap<TaId, TeachingAssistant>,
    shifts: &BTreeMap<ShiftId, Shift>,
    coverage: CoverageRule,
) -> Result<Vec<Violation>, ModelError> {
    let mut per_ta: BTreeMap<&TaId, Vec<&Shift>> = BTreeMap::new();
    let mut staffed: BTreeMap<&ShiftId, u32> = BTreeMap::new();
    for a in &schedule.assignments {
        if !tas.contains_key(&a.ta_id) {
            return Err(ModelError::UnknownTa(a.ta_id.to_string()));
        }
        let shift = shifts
            .get(&a.shift_id)
            .ok_or_else(|| ModelError::UnknownShift(a.shift_id.to_string()))?;
        per_ta.entry(&a.ta_id).or_default().push(shift);
        *staffed.entry(&a.shift_id).or_default() += 1;
    }
    if let Some(id) = schedule.online_overrides.iter().find(|id| !shifts.contains_key(*id)) {
        return Err(ModelError::UnknownShift(id.to_string()));
    }

    let mut violations = Vec::new();
    for shift in shifts.values() {
        let count = staffed.get(&shift.id).copied().unwrap_or(0);
        if count < shift.required_staff {
            violations.push(Violation {
                kind: ViolationKind::Undercovered,
                subject: Subject::Shift(shift.id.clone()),
                detail: format!("assigned {count} < required {}", shift.required_staff),
            });
        } else if count > shift.required_staff && coverage == CoverageRule::Exact {
            violations.push(Violation {
                kind: ViolationKind::Overcovered,
                subject: Subject::Shift(shift.id.clone()),
                detail: format!("assigned {count} > required {}", shift.required_staff),
            });
        }
    }

    for (ta_id, assigned) in &per_ta {
        let ta = &tas[*ta_id];
        for (i, a) in assigned.iter().enumerate() {
            for b in &assigned[i + 1..] {
                if a.slot.overlaps(&b.slot) {
                    violations.push(Violation {
                        kind: ViolationKind::Overlap,
                        subject: Subject::Ta((*ta_id).clone()),
                        detail: format!("{} overlaps {}", a.id, b.id),
                    });
                }
            }
            if !ta.is_available_for(&a.slot) {
                violations.push(Violation {
                    kind: ViolationKind::Unavailable,
                    subject: Subject::Ta((*ta_id).clone()),
                    detail: format!("{} at {}", a.id, a.slot.token()),
                });
            }
        }
        let minutes: i64 = assigned.iter().map(|s| s.minutes()).sum();
        if minutes > ta.profile.regular_minutes() {
            violations.push(Violation {
                kind: ViolationKind::BudgetExceeded,
                subject: Subject::Ta((*ta_id).clone()),
                detail: format!(
                    "{} > {}",
                    format_minutes_as_hours(minutes),
                    ta.profile.regular_task_hours
                ),
            });
        }
    }

    violations.sort();
    Ok(violations)
}
