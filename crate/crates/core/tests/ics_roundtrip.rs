mod common;

use chrono::NaiveDate;
use common::anchor;
use common::ics_reader::{read_events, verify_export};
use courseops_core::ics::export_ics;
use courseops_core::synthetic::{planted_instance, CourseShape};
use courseops_core::{generate_schedule, Schedule, SolveOutcome, SolverConfig, TaId};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fifty_tas_round_trip() {
    let weeks = 13;
    let mut pairs = Vec::new();
    let mut courses = Vec::new();
    for seed in 0..2 {
        let inst = planted_instance(&CourseShape::default(), seed, anchor());
        let SolveOutcome::Feasible { schedule } =
            generate_schedule(&inst.roster, &inst.shifts, &SolverConfig::default(), anchor()).unwrap()
        else {
            panic!("seed {seed} infeasible")
        };
        for ta in &inst.roster {
            pairs.push((courses.len(), ta.id.clone()));
        }
        courses.push((inst, schedule));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    pairs.shuffle(&mut rng);
    let mut events_seen = 0;
    for (i, (c, ta)) in pairs.iter().take(50).enumerate() {
        let (inst, schedule) = &courses[*c];
        // alternate Monday and mid-week term starts
        let term_start = NaiveDate::from_ymd_opt(2022, 9, 5 + 2 * (i as u32 % 3)).unwrap();
        let ics = export_ics(ta, schedule, &inst.roster, &inst.shifts, term_start, weeks).unwrap();
        events_seen += verify_export(&ics, ta, schedule, &inst.shifts, term_start, weeks).unwrap();

        // byte-stable: same inputs, same bytes, including after a serde round trip
        let again: Schedule = serde_json::from_str(&serde_json::to_string(schedule).unwrap()).unwrap();
        assert_eq!(export_ics(ta, &again, &inst.roster, &inst.shifts, term_start, weeks).unwrap(), ics);
    }
    assert!(events_seen > 100, "{events_seen}");
}

#[test]
fn reader_rejects_malformed_documents() {
    assert!(read_events("BEGIN:VCALENDAR\nEND:VCALENDAR\n").is_err());
    assert!(read_events("BEGIN:VCALENDAR\r\n long continuation\r\nEND:VCALENDAR").is_err());
    let long = format!("BEGIN:VCALENDAR\r\nX-LONG:{}\r\nEND:VCALENDAR\r\n", "a".repeat(80));
    assert!(read_events(&long).is_err());
}

#[test]
fn unknown_ta_is_rejected() {
    let inst = planted_instance(&CourseShape::default(), 0, anchor());
    let ghost: TaId = "ghost".into();
    assert!(export_ics(&ghost, &inst.planted, &inst.roster, &inst.shifts, anchor(), 13).is_err());
}
