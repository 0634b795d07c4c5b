//! Random operation sequences against the swap-request state machine.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use courseops_core::ops::{EventRecord, OpsCommand, OpsContext, OpsState};
use courseops_core::{
    generate_schedule, week_monday, Day, DurationOfChange, DutyRoster, NewSwapRequest, RequestId, RequestState,
    Resolution, Schedule, Shift, SolveOutcome, SolverConfig, SwapRequest, TaId, TeachingAssistant,
};
use rand::seq::SliceRandom;
use rand::Rng;

use super::brute_force_check;
use super::instances::small_instance;

pub struct Course {
    pub ctx: OpsContext,
    pub schedule: Schedule,
}

pub fn base_now() -> DateTime<Utc> {
    "2022-09-06T16:00:00Z".parse().unwrap()
}

/// Small solved courses to run sequences against.
pub fn course_pool<R: Rng>(rng: &mut R, size: usize) -> Vec<Course> {
    let mut pool = Vec::new();
    while pool.len() < size {
        let (roster, shifts) = small_instance(rng, 6, 8);
        if roster.len() < 2 {
            continue;
        }
        let SolveOutcome::Feasible { schedule } =
            generate_schedule(&roster, &shifts, &SolverConfig::default(), super::anchor()).unwrap()
        else {
            continue;
        };
        let mut ctx = OpsContext::new(roster, shifts, chrono_tz::America::Toronto);
        ctx.duty = Some(
            DutyRoster::new(Day::WEEKDAYS.iter().map(|d| (*d, TaId(format!("duty-{d}")))).collect()).unwrap(),
        );
        pool.push(Course { ctx, schedule });
    }
    pool
}

/// Legal request transitions, written out from the state diagram.
pub fn legal(from: RequestState, to: RequestState) -> bool {
    use RequestState::*;
    matches!(
        (from, to),
        (Submitted, Claimed) | (Claimed, Resolved) | (Submitted, Escalated) | (Claimed, Escalated)
    )
}

fn pick<'a, T, R: Rng>(rng: &mut R, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn random_command<R: Rng>(rng: &mut R, course: &Course, state: &OpsState) -> OpsCommand {
    let roster: &[TeachingAssistant] = &course.ctx.roster;
    let shifts: &[Shift] = &course.ctx.shifts;
    let ids: Vec<RequestId> = state.requests.keys().cloned().chain([RequestId::from("SR-missing")]).collect();
    let today = base_now().date_naive();
    // aim most commands at requests in the state they act on
    let target = |rng: &mut R, wanted: RequestState| -> RequestId {
        let matching: Vec<&RequestId> = state.requests.values().filter(|r| r.state == wanted).map(|r| &r.id).collect();
        if !matching.is_empty() && rng.gen_bool(0.7) {
            (*pick(rng, &matching)).clone()
        } else {
            pick(rng, &ids).clone()
        }
    };
    match rng.gen_range(0..10) {
        0..=2 => {
            // mostly valid submissions: an assigned pair on the right weekday
            let template = state.schedule.as_ref().unwrap();
            let (requester, shift_id) = match template.assignments.iter().collect::<Vec<_>>().choose(rng) {
                Some(a) if rng.gen_bool(0.85) => (a.ta_id.clone(), a.shift_id.clone()),
                _ => (pick(rng, roster).id.clone(), pick(rng, shifts).id.clone()),
            };
            let day = shifts.iter().find(|s| s.id == shift_id).unwrap().slot.day;
            let week = rng.gen_range(-1..4i64);
            let mut date = week_monday(today) + Duration::days(7 * week + day.offset());
            if rng.gen_bool(0.1) {
                date += Duration::days(1);
            }
            let duration = if rng.gen_bool(0.3) {
                DurationOfChange::Until(date + Duration::days(rng.gen_range(0..22)))
            } else {
                DurationOfChange::OneOff
            };
            OpsCommand::SubmitRequest {
                request: NewSwapRequest { requester, shift_id, occurrence_date: date, duration, reason: "sim".into() },
            }
        }
        3 | 4 => OpsCommand::ClaimRequest { id: target(rng, RequestState::Submitted) },
        5..=7 => {
            let id = target(rng, RequestState::Claimed);
            let resolution = match rng.gen_range(0..4) {
                0 => Resolution::Replacement { ta: pick(rng, roster).id.clone() },
                1 => Resolution::PeerSwap {
                    counterparty: pick(rng, roster).id.clone(),
                    counterparty_shift: pick(rng, shifts).id.clone(),
                },
                2 => Resolution::ModalityChange,
                _ => Resolution::Cancelled,
            };
            OpsCommand::ResolveRequest { id, resolution }
        }
        8 => OpsCommand::EscalateRequest { id: pick(rng, &ids).clone() },
        _ => OpsCommand::RunReverts { as_of: today + Duration::days(rng.gen_range(0..40)) },
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SimStats {
    pub sequences: usize,
    pub commands: usize,
    pub accepted: usize,
    pub resolutions: usize,
    pub illegal_transitions: usize,
    pub failing_schedules: usize,
    pub mutated_on_error: usize,
    pub replay_mismatches: usize,
}

fn week_of_overlays(request: &SwapRequest) -> Vec<NaiveDate> {
    let first = week_monday(request.occurrence_date);
    match request.duration_of_change {
        DurationOfChange::OneOff => vec![first],
        DurationOfChange::Until(end) => (0..)
            .map(|w| first + Duration::days(7 * w))
            .take_while(|m| *m + Duration::days(Day::of(request.occurrence_date).offset()) < end)
            .collect(),
    }
}

fn staffed_counts(schedule: &Schedule) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for a in &schedule.assignments {
        *out.entry(a.shift_id.to_string()).or_insert(0) += 1;
    }
    out
}

/// Runs one sequence and tallies every safety breach into `stats`.
pub fn run_sequence<R: Rng>(rng: &mut R, course: &Course, length: usize, stats: &mut SimStats) {
    stats.sequences += 1;
    let ctx = &course.ctx;
    let mut state = OpsState::default();
    let mut log: Vec<EventRecord> = Vec::new();
    let mut history: Vec<String> = vec![serde_json::to_string(&state).unwrap()];
    let mut offsets = vec![0usize];
    let set = OpsCommand::SetSchedule { schedule: course.schedule.clone() };
    state.commit(ctx, set, None, base_now(), |r| { log.extend_from_slice(r); Ok(()) }).unwrap();
    history.push(serde_json::to_string(&state).unwrap());
    offsets.push(log.len());

    for _ in 0..length {
        let command = random_command(rng, course, &state);
        let now = base_now() + Duration::hours(rng.gen_range(0..96));
        let before = state.clone();
        stats.commands += 1;
        let before_len = log.len();
        let result = state.commit(ctx, command.clone(), None, now, |r| { log.extend_from_slice(r); Ok(()) });
        match result {
            Err(_) => {
                if state != before || log.len() != before_len {
                    stats.mutated_on_error += 1;
                }
            }
            Ok(commit) => {
                stats.accepted += 1;
                for record in &commit.records {
                    let courseops_core::ops::Event::RequestUpdated { request } = &record.event else { continue };
                    let prev = &before.requests[&request.id];
                    let revert_only = prev.state == request.state && !prev.reverted && request.reverted;
                    if !revert_only && !legal(prev.state, request.state) {
                        stats.illegal_transitions += 1;
                    }
                    if request.state == RequestState::Resolved && prev.state != RequestState::Resolved {
                        stats.resolutions += 1;
                        for monday in week_of_overlays(request) {
                            let after = state.schedule_for_week(monday).unwrap();
                            if !brute_force_check(&after, &ctx.roster, &ctx.shifts, true).is_empty() {
                                stats.failing_schedules += 1;
                            }
                            let was = before.schedule_for_week(monday).unwrap();
                            if staffed_counts(&was) != staffed_counts(&after) {
                                stats.failing_schedules += 1;
                            }
                        }
                    }
                }
                // commands the diagram forbids must not have been accepted
                if let Some((id, allowed)) = command_target(&command) {
                    if let Some(prev) = before.requests.get(id) {
                        if !allowed.contains(&prev.state) {
                            stats.illegal_transitions += 1;
                        }
                    }
                }
            }
        }
        history.push(serde_json::to_string(&state).unwrap());
        offsets.push(log.len());
    }

    // full replay, then a crash at a random point in the log
    let replayed = OpsState::from_events(&log).unwrap();
    if serde_json::to_string(&replayed).unwrap() != *history.last().unwrap() {
        stats.replay_mismatches += 1;
    }
    let cut = rng.gen_range(0..offsets.len());
    let prefix = OpsState::from_events(&log[..offsets[cut]]).unwrap();
    if serde_json::to_string(&prefix).unwrap() != history[cut] {
        stats.replay_mismatches += 1;
    }
    for request in prefix.requests.values() {
        if let Some(week) = prefix.schedule_for_week(request.occurrence_date) {
            if !brute_force_check(&week, &ctx.roster, &ctx.shifts, true).is_empty() {
                stats.failing_schedules += 1;
            }
        }
    }
}

/// The request a command acts on and the states it may act from.
fn command_target(command: &OpsCommand) -> Option<(&RequestId, &'static [RequestState])> {
    use RequestState::*;
    match command {
        OpsCommand::ClaimRequest { id } => Some((id, &[Submitted])),
        OpsCommand::ResolveRequest { id, .. } => Some((id, &[Claimed])),
        OpsCommand::EscalateRequest { id } => Some((id, &[Submitted, Claimed])),
        _ => None,
    }
}
