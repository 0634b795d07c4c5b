//! Live rescheduling: swap requests and their state machine.
//!
//! A request moves `Submitted → Claimed → Resolved`, or to `Escalated` from
//! either open state when the occurrence is too close to handle in time. Every
//! transition function here is pure: it returns a new request (and schedule)
//! or an error, and never modifies its inputs.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::check_schedule;
use crate::error::ModelError;
use crate::model::{
    Assignment, Day, Modality, RequestId, Schedule, Shift, ShiftId, TaId, TeachingAssistant,
    ViolationKind,
};
use crate::solver::find_replacement_candidates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "date")]
pub enum DurationOfChange {
    OneOff,
    /// In effect for occurrences before this date; reverts on it.
    Until(NaiveDate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RequestState {
    Submitted,
    Claimed,
    Resolved,
    Escalated,
}

impl RequestState {
    pub fn can_become(self, next: RequestState) -> bool {
        use RequestState::*;
        matches!(
            (self, next),
            (Submitted, Claimed) | (Claimed, Resolved) | (Submitted, Escalated) | (Claimed, Escalated)
        )
    }

    pub fn is_open(self) -> bool {
        matches!(self, RequestState::Submitted | RequestState::Claimed)
    }
}

impl std::str::FromStr for RequestState {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "submitted" => Ok(RequestState::Submitted),
            "claimed" => Ok(RequestState::Claimed),
            "resolved" => Ok(RequestState::Resolved),
            "escalated" => Ok(RequestState::Escalated),
            _ => Err(ModelError::Parse(format!("unknown request state {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resolution {
    /// Bilateral exchange: the counterparty takes the requested shift and the
    /// requester takes `counterparty_shift`.
    PeerSwap { counterparty: TaId, counterparty_shift: ShiftId },
    Replacement { ta: TaId },
    /// Hold the in-person shift online instead.
    ModalityChange,
    /// Withdrawn request; the schedule is unchanged.
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapRequest {
    pub id: RequestId,
    pub requester: TaId,
    pub shift_id: ShiftId,
    pub occurrence_date: NaiveDate,
    pub duration_of_change: DurationOfChange,
    pub reason: String,
    pub state: RequestState,
    pub claimed_by: Option<TaId>,
    pub resolution: Option<Resolution>,
    pub revert_date: Option<NaiveDate>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub reverted: bool,
}

impl SwapRequest {
    /// Whether a resolved change applies to the occurrence of `shift_day` in
    /// the week starting at `monday`.
    pub fn applies_in_week(&self, shift_day: Day, monday: NaiveDate) -> bool {
        if self.state != RequestState::Resolved {
            return false;
        }
        let date = monday + Duration::days(shift_day.offset());
        match self.duration_of_change {
            DurationOfChange::OneOff => date == self.occurrence_date,
            DurationOfChange::Until(end) => self.occurrence_date <= date && date < end,
        }
    }
}

/// Scheduling-team member on duty for each weekday.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Day, TaId>", into = "BTreeMap<Day, TaId>")]
pub struct DutyRoster {
    owners: BTreeMap<Day, TaId>,
}

impl DutyRoster {
    pub fn new(owners: BTreeMap<Day, TaId>) -> Result<Self, ModelError> {
        if let Some(day) = Day::WEEKDAYS.iter().find(|d| !owners.contains_key(d)) {
            return Err(ModelError::Invalid(format!("duty roster has no owner for {day}")));
        }
        Ok(DutyRoster { owners })
    }

    pub fn owner(&self, day: Day) -> Option<&TaId> {
        self.owners.get(&day)
    }

    pub fn owners(&self) -> &BTreeMap<Day, TaId> {
        &self.owners
    }
}

impl TryFrom<BTreeMap<Day, TaId>> for DutyRoster {
    type Error = ModelError;
    fn try_from(owners: BTreeMap<Day, TaId>) -> Result<Self, Self::Error> {
        DutyRoster::new(owners)
    }
}

impl From<DutyRoster> for BTreeMap<Day, TaId> {
    fn from(roster: DutyRoster) -> Self {
        roster.owners
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewSwapRequest {
    pub requester: TaId,
    pub shift_id: ShiftId,
    pub occurrence_date: NaiveDate,
    #[serde(default = "one_off")]
    pub duration: DurationOfChange,
    #[serde(default)]
    pub reason: String,
}

fn one_off() -> DurationOfChange {
    DurationOfChange::OneOff
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("{requester} is not assigned to {shift}")]
    NotAssigned { requester: TaId, shift: ShiftId },
    #[error("occurrence date {0} is in the past")]
    PastDate(NaiveDate),
    #[error("{shift} runs on {expected}, not on {date}")]
    WrongWeekday { shift: ShiftId, expected: Day, date: NaiveDate },
    #[error("change must end after the occurrence date")]
    InvalidDuration,
    #[error("request {id} is {state:?} and cannot be {action}")]
    WrongState { id: RequestId, state: RequestState, action: &'static str },
    #[error("no duty owner for {0}")]
    NoOwner(Day),
    #[error("invalid resolution ({predicate}): {detail}")]
    InvalidResolution { predicate: &'static str, detail: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl WorkflowError {
    fn invalid(predicate: &'static str, detail: impl Into<String>) -> Self {
        WorkflowError::InvalidResolution { predicate, detail: detail.into() }
    }
}

fn find_shift<'a>(shifts: &'a [Shift], id: &ShiftId) -> Result<&'a Shift, ModelError> {
    shifts
        .iter()
        .find(|s| &s.id == id)
        .ok_or_else(|| ModelError::UnknownShift(id.to_string()))
}

/// Opens a request for one occurrence of a shift the requester works.
pub fn submit_request(
    id: RequestId,
    new: NewSwapRequest,
    schedule: &Schedule,
    shifts: &[Shift],
    today: NaiveDate,
    now: DateTime<Utc>,
) -> Result<SwapRequest, WorkflowError> {
    let shift = find_shift(shifts, &new.shift_id)?;
    if !schedule.is_assigned(&new.requester, &new.shift_id) {
        return Err(WorkflowError::NotAssigned { requester: new.requester, shift: new.shift_id });
    }
    if new.occurrence_date < today {
        return Err(WorkflowError::PastDate(new.occurrence_date));
    }
    if Day::of(new.occurrence_date) != shift.slot.day {
        return Err(WorkflowError::WrongWeekday {
            shift: new.shift_id,
            expected: shift.slot.day,
            date: new.occurrence_date,
        });
    }
    if let DurationOfChange::Until(end) = new.duration {
        if end <= new.occurrence_date {
            return Err(WorkflowError::InvalidDuration);
        }
    }
    Ok(SwapRequest {
        id,
        requester: new.requester,
        shift_id: new.shift_id,
        occurrence_date: new.occurrence_date,
        duration_of_change: new.duration,
        reason: new.reason,
        state: RequestState::Submitted,
        claimed_by: None,
        resolution: None,
        revert_date: None,
        created_at: now,
        reverted: false,
    })
}

/// Assigns the request to the scheduler on duty for the occurrence's weekday.
pub fn auto_claim(request: &SwapRequest, duty: &DutyRoster) -> Result<SwapRequest, WorkflowError> {
    if request.state != RequestState::Submitted {
        return Err(WorkflowError::WrongState {
            id: request.id.clone(),
            state: request.state,
            action: "claimed",
        });
    }
    let day = Day::of(request.occurrence_date);
    let owner = duty.owner(day).ok_or(WorkflowError::NoOwner(day))?;
    Ok(SwapRequest {
        state: RequestState::Claimed,
        claimed_by: Some(owner.clone()),
        ..request.clone()
    })
}

/// Applies a resolution's staffing effect without validating it.
pub fn apply_resolution(schedule: &Schedule, request: &SwapRequest, resolution: &Resolution) -> Schedule {
    let mut next = schedule.clone();
    let requester = &request.requester;
    let shift = &request.shift_id;
    match resolution {
        Resolution::PeerSwap { counterparty, counterparty_shift } => {
            next.assignments.remove(&Assignment::new(requester.clone(), shift.clone()));
            next.assignments.remove(&Assignment::new(counterparty.clone(), counterparty_shift.clone()));
            next.assignments.insert(Assignment::new(counterparty.clone(), shift.clone()));
            next.assignments.insert(Assignment::new(requester.clone(), counterparty_shift.clone()));
        }
        Resolution::Replacement { ta } => {
            next.assignments.remove(&Assignment::new(requester.clone(), shift.clone()));
            next.assignments.insert(Assignment::new(ta.clone(), shift.clone()));
        }
        Resolution::ModalityChange => {
            next.online_overrides.insert(shift.clone());
        }
        Resolution::Cancelled => {}
    }
    next
}

fn predicate_name(kind: ViolationKind) -> &'static str {
    match kind {
        ViolationKind::Overlap => "overlap",
        ViolationKind::Unavailable => "unavailable",
        ViolationKind::Undercovered => "undercovered",
        ViolationKind::Overcovered => "overcovered",
        ViolationKind::BudgetExceeded => "budget",
    }
}

/// Validates `resolution` against the schedule in force for the occurrence and
/// returns the resolved request together with the updated schedule.
pub fn resolve(
    request: &SwapRequest,
    resolution: Resolution,
    schedule: &Schedule,
    roster: &[TeachingAssistant],
    shifts: &[Shift],
) -> Result<(SwapRequest, Schedule), WorkflowError> {
    if request.state != RequestState::Claimed {
        return Err(WorkflowError::WrongState {
            id: request.id.clone(),
            state: request.state,
            action: "resolved",
        });
    }
    let shift = find_shift(shifts, &request.shift_id)?;
    if !schedule.is_assigned(&request.requester, &request.shift_id) {
        return Err(WorkflowError::invalid(
            "assigned",
            format!("{} no longer works {}", request.requester, request.shift_id),
        ));
    }
    match &resolution {
        Resolution::Replacement { ta } => {
            let excluded = BTreeSet::from([request.requester.clone()]);
            let candidates = find_replacement_candidates(schedule, roster, shifts, &shift.id, &excluded)?;
            if !candidates.contains(ta) {
                return Err(WorkflowError::invalid(
                    "candidate",
                    format!("{ta} cannot take {}", shift.id),
                ));
            }
        }
        Resolution::PeerSwap { counterparty, counterparty_shift } => {
            if counterparty == &request.requester {
                return Err(WorkflowError::invalid("counterparty", "cannot swap with oneself"));
            }
            find_shift(shifts, counterparty_shift)?;
            if !schedule.is_assigned(counterparty, counterparty_shift) {
                return Err(WorkflowError::invalid(
                    "counterparty",
                    format!("{counterparty} is not assigned to {counterparty_shift}"),
                ));
            }
            if schedule.is_assigned(counterparty, &shift.id)
                || schedule.is_assigned(&request.requester, counterparty_shift)
            {
                return Err(WorkflowError::invalid(
                    "counterparty",
                    "both TAs already work one of the swapped shifts",
                ));
            }
        }
        Resolution::ModalityChange => {
            if schedule.effective_modality(shift) == Modality::Online {
                return Err(WorkflowError::invalid("already online", format!("{} is online", shift.id)));
            }
        }
        Resolution::Cancelled => {}
    }

    let next = apply_resolution(schedule, request, &resolution);
    let violations = check_schedule(&next, roster, shifts)?;
    if let Some(v) = violations.first() {
        return Err(WorkflowError::invalid(predicate_name(v.kind), v.to_string()));
    }
    let revert_date = match request.duration_of_change {
        DurationOfChange::Until(end) if resolution != Resolution::Cancelled => Some(end),
        _ => None,
    };
    let resolved = SwapRequest {
        state: RequestState::Resolved,
        resolution: Some(resolution),
        revert_date,
        ..request.clone()
    };
    Ok((resolved, next))
}

/// Escalates an open request whose occurrence starts within `lead_time` of `now`.
pub fn escalate(
    request: &SwapRequest,
    occurrence_start: DateTime<Utc>,
    now: DateTime<Utc>,
    lead_time: Duration,
) -> Result<SwapRequest, WorkflowError> {
    if !request.state.is_open() {
        return Err(WorkflowError::WrongState {
            id: request.id.clone(),
            state: request.state,
            action: "escalated",
        });
    }
    if occurrence_start - now < lead_time {
        Ok(SwapRequest { state: RequestState::Escalated, ..request.clone() })
    } else {
        Ok(request.clone())
    }
}

/// Resolved, not yet reverted requests whose revert date has arrived.
pub fn due_reverts<'a>(
    requests: impl IntoIterator<Item = &'a SwapRequest>,
    as_of: NaiveDate,
) -> Vec<SwapRequest> {
    let mut due: Vec<SwapRequest> = requests
        .into_iter()
        .filter(|r| r.state == RequestState::Resolved && !r.reverted)
        .filter(|r| r.revert_date.is_some_and(|d| d <= as_of))
        .cloned()
        .collect();
    due.sort_by(|a, b| (a.revert_date, &a.id).cmp(&(b.revert_date, &b.id)));
    due
}
