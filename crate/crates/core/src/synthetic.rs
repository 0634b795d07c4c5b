//! Synthetic course instances built around a hidden feasible staffing.
//!
//! The staffing is drawn first; shift headcounts and TA availability are then
//! derived from it, so every generated instance is feasible by construction.

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    standard_profile, Assignment, Day, FunctionalArea, Modality, Schedule, Shift, ShiftKind,
    TaId, TaRole, Team, TeamKind, TeachingAssistant, WeekSlot,
};

#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub roster: Vec<TeachingAssistant>,
    pub shifts: Vec<Shift>,
    pub teams: Vec<Team>,
    /// The staffing the instance was built from.
    pub planted: Schedule,
}

#[derive(Debug, Clone)]
pub struct CourseShape {
    /// Office-hour slots run hourly on weekdays between these hours.
    pub office_hours_from: u16,
    pub office_hours_to: u16,
    /// Required staff per office-hour slot, cycled across the slots.
    pub office_hour_staffing: Vec<u32>,
    pub lab_count: usize,
    pub lab_minutes: u16,
    /// Required staff per lab, cycled across the labs.
    pub lab_staffing: Vec<u32>,
    /// Extra availability blocks per TA on top of their planted shifts.
    pub extra_availability_blocks: usize,
}

impl Default for CourseShape {
    /// 60 weekday office-hour slots from 08:00 to 20:00 staffed by 150
    /// TA-hours in total, plus 41 ninety-minute lab sections.
    fn default() -> Self {
        CourseShape {
            office_hours_from: 8,
            office_hours_to: 20,
            office_hour_staffing: vec![3, 2],
            lab_count: 41,
            lab_minutes: 90,
            lab_staffing: vec![2, 1],
            extra_availability_blocks: 3,
        }
    }
}

const LAB_STARTS: [u16; 8] = [480, 570, 660, 750, 840, 930, 1020, 1110];

/// (id, role, profile name, team id) per person.
type Staff = Vec<(TaId, TaRole, &'static str, String)>;

/// Five functional teams of six (lead plus five members) and three regular
/// teams of five, 45 TAs in all, using the standard profiles.
fn staff_teams() -> (Staff, Vec<Team>) {
    let mut people = Vec::new();
    let mut teams = Vec::new();
    for (i, area) in FunctionalArea::ALL.iter().enumerate() {
        let team_id = format!("F{}", i + 1);
        let lead = TaId(format!("f{}-lead", i + 1));
        people.push((lead.clone(), TaRole::Lead, "FuncLead12", team_id.clone()));
        let mut members = Vec::new();
        for m in 1..=5 {
            let id = TaId(format!("f{}-m{m}", i + 1));
            let profile = if m <= 3 { "FuncMember12" } else { "FuncMember6" };
            people.push((id.clone(), TaRole::Member, profile, team_id.clone()));
            members.push(id);
        }
        teams.push(Team {
            id: team_id.into(),
            kind: TeamKind::Functional(*area),
            lead_ta: lead,
            member_ids: members,
        });
    }
    for i in 1..=3 {
        let team_id = format!("R{i}");
        let lead = TaId(format!("r{i}-lead"));
        people.push((lead.clone(), TaRole::Lead, "RegLead12", team_id.clone()));
        let mut members = Vec::new();
        for m in 1..=4 {
            let id = TaId(format!("r{i}-m{m}"));
            let profile = if m <= 2 { "RegMember12" } else { "RegMember6" };
            people.push((id.clone(), TaRole::Member, profile, team_id.clone()));
            members.push(id);
        }
        teams.push(Team { id: team_id.into(), kind: TeamKind::Regular, lead_ta: lead, member_ids: members });
    }
    (people, teams)
}

fn course_shifts(shape: &CourseShape) -> Vec<Shift> {
    let mut shifts = Vec::new();
    let mut n = 0;
    for day in Day::WEEKDAYS {
        for hour in shape.office_hours_from..shape.office_hours_to {
            shifts.push(Shift {
                id: format!("oh-{}-{hour:02}", day.abbrev().to_ascii_lowercase()).into(),
                kind: ShiftKind::OfficeHour,
                slot: WeekSlot::new(day, hour * 60, 60).expect("hourly slot"),
                modality: if n % 2 == 0 { Modality::InPerson } else { Modality::Online },
                required_staff: shape.office_hour_staffing[n % shape.office_hour_staffing.len()],
                section_ref: None,
            });
            n += 1;
        }
    }
    for i in 0..shape.lab_count {
        let day = Day::WEEKDAYS[i % 5];
        let start = LAB_STARTS[(i / 5) % LAB_STARTS.len()];
        shifts.push(Shift {
            id: format!("lab-{:02}", i + 1).into(),
            kind: ShiftKind::Lab,
            slot: WeekSlot::new(day, start, shape.lab_minutes).expect("lab slot"),
            modality: Modality::InPerson,
            required_staff: shape.lab_staffing[i % shape.lab_staffing.len()],
            section_ref: Some(format!("L{:02}", i + 1)),
        });
    }
    shifts
}

/// Builds an instance of the given shape whose feasibility is guaranteed by a
/// hidden staffing drawn with `seed`.
pub fn planted_instance(shape: &CourseShape, seed: u64, week_anchor: NaiveDate) -> PlantedInstance {
    let (people, teams) = staff_teams();
    let shifts = course_shifts(shape);
    let budgets: Vec<i64> = people
        .iter()
        .map(|(_, _, profile, _)| standard_profile(profile).expect("standard profile").regular_minutes())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let staffing = 'attempt: loop {
        let mut load = vec![0i64; people.len()];
        let mut taken: Vec<Vec<usize>> = vec![Vec::new(); people.len()];
        let mut order: Vec<usize> = (0..shifts.len()).collect();
        order.shuffle(&mut rng);
        // longest shifts first so that labs find room
        order.sort_by_key(|&s| std::cmp::Reverse(shifts[s].slot.duration_min));
        let mut staffing: Vec<Vec<usize>> = vec![Vec::new(); shifts.len()];
        for s in order {
            for _ in 0..shifts[s].required_staff {
                let fits: Vec<usize> = (0..people.len())
                    .filter(|&t| {
                        load[t] + shifts[s].minutes() <= budgets[t]
                            && !staffing[s].contains(&t)
                            && taken[t].iter().all(|&o| !shifts[o].slot.overlaps(&shifts[s].slot))
                    })
                    .collect();
                // prefer TAs with the most spare budget
                let Some(&t) = fits
                    .iter()
                    .filter(|_| rng.gen_bool(0.5))
                    .max_by_key(|&&t| budgets[t] - load[t])
                    .or_else(|| fits.iter().max_by_key(|&&t| budgets[t] - load[t]))
                else {
                    continue 'attempt;
                };
                load[t] += shifts[s].minutes();
                taken[t].push(s);
                staffing[s].push(t);
            }
        }
        break staffing;
    };

    let mut roster = Vec::with_capacity(people.len());
    for (t, (id, role, profile, team)) in people.iter().enumerate() {
        let mut availability: Vec<WeekSlot> = staffing
            .iter()
            .enumerate()
            .filter(|(_, staff)| staff.contains(&t))
            .map(|(s, _)| shifts[s].slot)
            .collect();
        for _ in 0..shape.extra_availability_blocks {
            let day = Day::WEEKDAYS[rng.gen_range(0..5)];
            let start = 60 * rng.gen_range(shape.office_hours_from..shape.office_hours_to - 1);
            let hours = rng.gen_range(1..=3u16).min(shape.office_hours_to - start / 60);
            availability.push(WeekSlot::new(day, start, hours * 60).expect("extra slot"));
        }
        availability.sort();
        availability.dedup();
        roster.push(TeachingAssistant {
            id: id.clone(),
            display_name: id.as_str().replace('-', " ").to_uppercase(),
            email: format!("{id}@example.edu"),
            role: *role,
            team_id: team.as_str().into(),
            profile: standard_profile(profile).expect("standard profile"),
            availability,
        });
    }

    let planted = Schedule::with_assignments(
        week_anchor,
        staffing.iter().enumerate().flat_map(|(s, staff)| {
            let shifts = &shifts;
            let people = &people;
            staff.iter().map(move |&t| Assignment::new(people[t].0.clone(), shifts[s].id.clone()))
        }),
    );
    PlantedInstance { roster, shifts, teams, planted }
}
