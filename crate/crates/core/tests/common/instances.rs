use courseops_core::{
    standard_profiles, Day, Modality, Shift, ShiftKind, TaRole, TeachingAssistant, WeekSlot,
};
use rand::Rng;

/// A random desk-scale instance: up to `max_tas` TAs and `max_shifts` shifts
/// packed into two days so that overlaps and availability gaps are common.
pub fn small_instance<R: Rng>(
    rng: &mut R,
    max_tas: usize,
    max_shifts: usize,
) -> (Vec<TeachingAssistant>, Vec<Shift>) {
    let profiles = standard_profiles();
    let days = [Day::Mon, Day::Tue];
    let n_tas = rng.gen_range(1..=max_tas);
    let n_shifts = rng.gen_range(1..=max_shifts.min(n_tas * 2));

    let roster = (0..n_tas)
        .map(|i| {
            let mut availability = Vec::new();
            for _ in 0..rng.gen_range(2..=4) {
                let day = days[rng.gen_range(0..days.len())];
                let start = 480 + 30 * rng.gen_range(0..12u16);
                let duration = 60 * rng.gen_range(2..=6u16);
                let slot = WeekSlot::new(day, start, duration).unwrap();
                if !availability.contains(&slot) {
                    availability.push(slot);
                }
            }
            TeachingAssistant {
                id: format!("ta{i}").into(),
                display_name: format!("TA {i}"),
                email: format!("ta{i}@example.edu"),
                role: TaRole::Member,
                team_id: "team".into(),
                profile: profiles[rng.gen_range(0..profiles.len())].clone(),
                availability,
            }
        })
        .collect();

    let shifts = (0..n_shifts)
        .map(|i| {
            let lab = rng.gen_bool(0.3);
            Shift {
                id: format!("s{i:02}").into(),
                kind: if lab { ShiftKind::Lab } else { ShiftKind::OfficeHour },
                slot: WeekSlot::new(
                    days[rng.gen_range(0..days.len())],
                    480 + 30 * rng.gen_range(0..14u16),
                    30 * rng.gen_range(1..=4u16),
                )
                .unwrap(),
                modality: if rng.gen_bool(0.5) { Modality::Online } else { Modality::InPerson },
                required_staff: if rng.gen_bool(0.85) { 1 } else { 2 },
                section_ref: lab.then(|| format!("L{i}")),
            }
        })
        .collect();
    (roster, shifts)
}
