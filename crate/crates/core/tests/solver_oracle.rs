mod common;

use std::collections::BTreeSet;

use common::instances::small_instance;
use common::{anchor, assigned_minutes, brute_force_check, exhaustive_verdict, Verdict};
use courseops_core::{
    check_schedule, check_schedule_with, find_replacement_candidates, generate_schedule,
    Assignment, CoverageRule, ProofKind, Schedule, SolveOutcome, SolverConfig, TaId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn check_schedule_matches_brute_force_checker() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (roster, shifts) = small_instance(&mut rng, 5, 8);
        let mut schedule = Schedule::new(anchor());
        for ta in &roster {
            for shift in &shifts {
                if rng.gen_bool(0.3) {
                    schedule.assignments.insert(Assignment::new(ta.id.clone(), shift.id.clone()));
                }
            }
        }
        let exact = rng.gen_bool(0.7);
        let rule = if exact { CoverageRule::Exact } else { CoverageRule::AtLeast };
        let fast = check_schedule_with(&schedule, &roster, &shifts, rule).unwrap();
        let slow = brute_force_check(&schedule, &roster, &shifts, exact);
        assert_eq!(fast, slow);
    }
}

#[test]
fn adding_an_assignment_keeps_other_undercoverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (roster, shifts) = small_instance(&mut rng, 4, 6);
        let mut schedule = Schedule::new(anchor());
        for ta in &roster {
            for shift in &shifts {
                if rng.gen_bool(0.2) {
                    schedule.assignments.insert(Assignment::new(ta.id.clone(), shift.id.clone()));
                }
            }
        }
        let before = check_schedule(&schedule, &roster, &shifts).unwrap();
        let ta = &roster[rng.gen_range(0..roster.len())];
        let shift = &shifts[rng.gen_range(0..shifts.len())];
        schedule.assignments.insert(Assignment::new(ta.id.clone(), shift.id.clone()));
        let after = check_schedule(&schedule, &roster, &shifts).unwrap();
        for v in before.iter().filter(|v| v.kind == courseops_core::ViolationKind::Undercovered) {
            if v.subject.id() != shift.id.as_str() {
                assert!(after.contains(v), "{v} disappeared");
            }
        }
        if after.is_empty() {
            for s in &shifts {
                assert_eq!(schedule.staff_of(&s.id).count() as u32, s.required_staff);
            }
        }
    }
}

#[test]
fn solver_agrees_with_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2022);
    let config = SolverConfig::default();
    let (mut decided, mut feasible, mut skipped) = (0, 0, 0);
    while decided < 200 {
        let (roster, shifts) = small_instance(&mut rng, 8, 12);
        let verdict = exhaustive_verdict(&roster, &shifts, 200_000);
        if verdict == Verdict::Undecided {
            skipped += 1;
            continue;
        }
        decided += 1;
        match generate_schedule(&roster, &shifts, &config, anchor()).unwrap() {
            SolveOutcome::Feasible { schedule } => {
                assert_eq!(verdict, Verdict::Feasible);
                assert!(brute_force_check(&schedule, &roster, &shifts, true).is_empty());
                feasible += 1;
            }
            SolveOutcome::Infeasible { report } => {
                assert_eq!(verdict, Verdict::Infeasible, "{report:?}");
                assert_eq!(report.proof_kind, ProofKind::Exhausted);
                assert!(!report.uncovered_shift_ids.is_empty());
            }
        }
    }
    eprintln!("decided {decided}, feasible {feasible}, skipped {skipped}");
    assert!(feasible > 40 && feasible < 160, "instance mix is degenerate: {feasible}");
}

#[test]
fn equal_seeds_give_identical_schedules() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (roster, shifts) = small_instance(&mut rng, 8, 12);
        let config = SolverConfig { seed: 42, ..Default::default() };
        let a = generate_schedule(&roster, &shifts, &config, anchor()).unwrap();
        let b = generate_schedule(&roster, &shifts, &config, anchor()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

fn brute_force_candidates(
    schedule: &Schedule,
    roster: &[courseops_core::TeachingAssistant],
    shifts: &[courseops_core::Shift],
    target: &courseops_core::Shift,
    excluded: &BTreeSet<TaId>,
) -> Vec<TaId> {
    let loads = assigned_minutes(schedule, shifts);
    let mut out: Vec<(i64, TaId)> = roster
        .iter()
        .filter(|ta| !excluded.contains(&ta.id))
        .filter(|ta| !schedule.is_assigned(&ta.id, &target.id))
        .filter(|ta| {
            // adding the assignment must not create an overlap, an availability
            // breach or a budget breach for this TA
            let mut with = schedule.clone();
            with.assignments.insert(Assignment::new(ta.id.clone(), target.id.clone()));
            !brute_force_check(&with, roster, shifts, true).iter().any(|v| {
                v.subject.id() == ta.id.as_str()
                    && v.detail.contains(target.id.as_str())
                    || (v.subject.id() == ta.id.as_str()
                        && v.kind == courseops_core::ViolationKind::BudgetExceeded)
            })
        })
        .map(|ta| (loads.get(ta.id.as_str()).copied().unwrap_or(0), ta.id.clone()))
        .collect();
    out.sort();
    out.into_iter().map(|(_, id)| id).collect()
}

#[test]
fn replacement_candidates_match_predicate_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    while checked < 150 {
        let (roster, shifts) = small_instance(&mut rng, 8, 10);
        let SolveOutcome::Feasible { schedule } =
            generate_schedule(&roster, &shifts, &SolverConfig::default(), anchor()).unwrap()
        else {
            continue;
        };
        checked += 1;
        let target = &shifts[rng.gen_range(0..shifts.len())];
        let excluded: BTreeSet<TaId> =
            roster.iter().filter(|_| rng.gen_bool(0.2)).map(|t| t.id.clone()).collect();
        let fast = find_replacement_candidates(&schedule, &roster, &shifts, &target.id, &excluded).unwrap();
        let slow = brute_force_candidates(&schedule, &roster, &shifts, target, &excluded);
        assert_eq!(fast, slow);
        for ta in &fast {
            let mut with = schedule.clone();
            with.assignments.insert(Assignment::new(ta.clone(), target.id.clone()));
            let violations = check_schedule_with(&with, &roster, &shifts, CoverageRule::AtLeast).unwrap();
            assert!(violations.is_empty(), "{violations:?}");
        }
    }
}
