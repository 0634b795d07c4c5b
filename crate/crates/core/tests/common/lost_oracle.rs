//! Plain re-statements of the lost-student rules, plus record generators.

use chrono::{Duration, NaiveDate};
use courseops_core::lost_students::{
    Cutoffs, Deliverable, DeliverableKind, DetectionConfig, GradeCell, StreakMode, StudentRecord,
};
use rand::Rng;

pub fn term_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 9, 7).unwrap()
}

pub fn add_drop() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 9, 20).unwrap()
}

/// Weekly labs and quizzes plus two midterms across a 13-week term.
pub fn catalog() -> Vec<Deliverable> {
    let mut out = Vec::new();
    for i in 1..=10 {
        let week = term_start() + Duration::days(7 * i64::from(i));
        out.push(Deliverable { kind: DeliverableKind::Lab, index: i, due_date: week + Duration::days(2), max_score: 10.0 });
        out.push(Deliverable { kind: DeliverableKind::Quiz, index: i, due_date: week + Duration::days(4), max_score: 5.0 });
    }
    out.push(Deliverable { kind: DeliverableKind::Midterm, index: 1, due_date: term_start() + Duration::days(40), max_score: 100.0 });
    out.push(Deliverable { kind: DeliverableKind::Midterm, index: 2, due_date: term_start() + Duration::days(75), max_score: 100.0 });
    out
}

pub fn random_record<R: Rng>(rng: &mut R, id: usize, catalog: &[Deliverable]) -> StudentRecord {
    // each student has a propensity to struggle, so streaks actually happen
    let weak = rng.gen_range(0.0..1.0f64).powi(3);
    let mut grades: Vec<GradeCell> = catalog
        .iter()
        .map(|d| {
            let submitted = rng.gen_bool(1.0 - 0.5 * weak);
            let score = match (submitted, rng.gen_range(0..10)) {
                (false, _) => None,
                (true, 0) => None,
                (true, _) => {
                    let frac = 1.0 - rng.gen_range(0.0..1.0f64) * (0.4 + 0.6 * weak);
                    Some((frac * d.max_score * 2.0).round() / 2.0)
                }
            };
            GradeCell { deliverable_kind: d.kind, index: d.index, due_date: d.due_date, max_score: d.max_score, score, submitted }
        })
        .collect();
    grades.sort_by_key(|g| (g.due_date, g.deliverable_kind, g.index));
    StudentRecord {
        student_id: format!("s{id:04}").into(),
        enrollment_date: term_start() + Duration::days(rng.gen_range(-3..14)),
        first_lms_access: rng.gen_bool(0.9).then(|| (term_start() + Duration::days(rng.gen_range(0..10))).and_hms_opt(9, 0, 0).unwrap().and_utc()),
        discord_joined: rng.gen_bool(0.85),
        grades,
    }
}

pub fn random_config<R: Rng>(rng: &mut R) -> DetectionConfig {
    let mut c = DetectionConfig::new(term_start(), add_drop());
    c.n_labs = rng.gen_range(1..4);
    c.m_quizzes = rng.gen_range(1..4);
    c.k_midterms = rng.gen_range(1..3);
    c.cutoff_fraction = Cutoffs { lab: rng.gen_range(0.0..=1.0), quiz: rng.gen_range(0.0..=1.0), midterm: rng.gen_range(0.0..=1.0) };
    c.mode = if rng.gen_bool(0.8) { StreakMode::AllOf } else { StreakMode::AnyOf };
    c
}

/// "Did not submit or scored below the cut-off for the last N labs (or M
/// quizzes, or K midterms)", evaluated by walking back from `as_of`.
pub fn rule_fires(record: &StudentRecord, config: &DetectionConfig, as_of: NaiveDate) -> Option<DeliverableKind> {
    for (kind, window, cutoff) in [
        (DeliverableKind::Lab, config.n_labs, config.cutoff_fraction.lab),
        (DeliverableKind::Quiz, config.m_quizzes, config.cutoff_fraction.quiz),
        (DeliverableKind::Midterm, config.k_midterms, config.cutoff_fraction.midterm),
    ] {
        let mut past: Vec<&GradeCell> = Vec::new();
        for g in record.grades.iter().rev() {
            if g.deliverable_kind == kind && g.due_date <= as_of {
                past.push(g);
            }
        }
        if past.len() < window {
            continue;
        }
        let mut failing = 0;
        for g in &past[..window] {
            let bad = if !g.submitted {
                true
            } else {
                match g.score {
                    Some(s) => s < cutoff * g.max_score,
                    None => false,
                }
            };
            if bad {
                failing += 1;
            }
        }
        let fires = match config.mode {
            StreakMode::AllOf => failing == window,
            StreakMode::AnyOf => failing > 0,
        };
        if fires {
            return Some(kind);
        }
    }
    None
}

/// Writes records back out in the wide export format.
pub fn to_export_csv(records: &[StudentRecord], catalog: &[Deliverable]) -> String {
    let mut out = String::from("student_id,enrollment_date,first_lms_access,discord_joined");
    for d in catalog {
        out.push_str(&format!(",{},{}", d.score_column(), d.submitted_column()));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}",
            r.student_id,
            r.enrollment_date,
            r.first_lms_access.map(|t| t.to_rfc3339()).unwrap_or_default(),
            r.discord_joined
        ));
        for d in catalog {
            let g = r.grades.iter().find(|g| g.deliverable_kind == d.kind && g.index == d.index).unwrap();
            let score = g.score.map(|s| format!("{s}/{}", d.max_score)).unwrap_or_default();
            out.push_str(&format!(",{score},{}", if g.submitted { "yes" } else { "no" }));
        }
        out.push('\n');
    }
    out
}
