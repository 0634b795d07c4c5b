//! CSV formats for rosters, shifts, schedules, deliverables and duty rosters.
//!
//! Inputs are curated files, so the loaders stop at the first bad row and
//! name its line.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::lost_students::{Deliverable, DeliverableKind};
use crate::model::{
    parse_clock, standard_profile, Assignment, Day, Modality, Schedule, Shift, ShiftKind, TaId, TaRole,
    TeachingAssistant, WeekSlot,
};

fn fold(text: &str) -> String {
    text.chars().filter(|c| !matches!(c, '_' | '-' | ' ')).collect::<String>().to_ascii_lowercase()
}

fn parse_role(text: &str) -> Result<TaRole, String> {
    match fold(text).as_str() {
        "lead" => Ok(TaRole::Lead),
        "member" => Ok(TaRole::Member),
        _ => Err(format!("unknown role {text:?}")),
    }
}

fn parse_kind(text: &str) -> Result<ShiftKind, String> {
    match fold(text).as_str() {
        "officehour" | "oh" => Ok(ShiftKind::OfficeHour),
        "lab" => Ok(ShiftKind::Lab),
        _ => Err(format!("unknown shift kind {text:?}")),
    }
}

fn parse_modality(text: &str) -> Result<Modality, String> {
    match fold(text).as_str() {
        "inperson" => Ok(Modality::InPerson),
        "online" => Ok(Modality::Online),
        _ => Err(format!("unknown modality {text:?}")),
    }
}

fn parse_deliverable_kind(text: &str) -> Result<DeliverableKind, String> {
    DeliverableKind::ALL
        .into_iter()
        .find(|k| k.prefix() == fold(text))
        .ok_or_else(|| format!("unknown deliverable kind {text:?}"))
}

fn role_name(role: TaRole) -> &'static str {
    match role {
        TaRole::Lead => "lead",
        TaRole::Member => "member",
    }
}

fn kind_name(kind: ShiftKind) -> &'static str {
    match kind {
        ShiftKind::OfficeHour => "office_hour",
        ShiftKind::Lab => "lab",
    }
}

fn modality_name(modality: Modality) -> &'static str {
    match modality {
        Modality::InPerson => "in_person",
        Modality::Online => "online",
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RosterRow {
    ta_id: String,
    name: String,
    email: String,
    role: String,
    team_id: String,
    profile_name: String,
    /// `Mon:08:00+120;Tue:13:00+90`
    availability: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ShiftRow {
    shift_id: String,
    kind: String,
    day: String,
    start: String,
    duration_min: u16,
    modality: String,
    required_staff: u32,
    #[serde(default)]
    section_ref: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    ta_id: String,
    shift_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeliverableRow {
    kind: String,
    index: u32,
    due_date: NaiveDate,
    max_score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DutyRow {
    day: String,
    ta_id: String,
}

fn read_rows<T: for<'de> Deserialize<'de>>(
    text: &str,
    mut convert: impl FnMut(T) -> Result<(), String>,
) -> Result<(), ModelError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| ModelError::Parse(e.to_string()))?.clone();
    for record in reader.records() {
        let record = record.map_err(|e| ModelError::Parse(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: T = record
            .deserialize(Some(&headers))
            .map_err(|e| ModelError::Parse(format!("line {line}: {e}")))?;
        convert(row).map_err(|e| ModelError::Parse(format!("line {line}: {e}")))?;
    }
    Ok(())
}

pub fn read_roster_csv(text: &str) -> Result<Vec<TeachingAssistant>, ModelError> {
    let mut roster = Vec::new();
    read_rows(text, |r: RosterRow| {
        let profile = standard_profile(&r.profile_name).ok_or_else(|| format!("unknown profile {:?}", r.profile_name))?;
        let availability = r
            .availability
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(WeekSlot::parse_token)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let ta = TeachingAssistant {
            id: r.ta_id.into(),
            display_name: r.name,
            email: r.email,
            role: parse_role(&r.role)?,
            team_id: r.team_id.into(),
            profile,
            availability,
        };
        ta.validate().map_err(|e| e.to_string())?;
        roster.push(ta);
        Ok(())
    })?;
    crate::model::index_roster(&roster)?;
    Ok(roster)
}

pub fn read_shifts_csv(text: &str) -> Result<Vec<Shift>, ModelError> {
    let mut shifts = Vec::new();
    read_rows(text, |r: ShiftRow| {
        let day: Day = r.day.parse().map_err(|e: ModelError| e.to_string())?;
        let start = parse_clock(&r.start).ok_or_else(|| format!("bad start time {:?}", r.start))?;
        let shift = Shift {
            id: r.shift_id.into(),
            kind: parse_kind(&r.kind)?,
            slot: WeekSlot::new(day, start, r.duration_min).map_err(|e| e.to_string())?,
            modality: parse_modality(&r.modality)?,
            required_staff: r.required_staff,
            section_ref: Some(r.section_ref).filter(|s| !s.is_empty()),
        };
        shift.validate().map_err(|e| e.to_string())?;
        shifts.push(shift);
        Ok(())
    })?;
    crate::model::index_shifts(&shifts)?;
    Ok(shifts)
}

pub fn read_schedule_csv(text: &str, week_anchor: NaiveDate) -> Result<Schedule, ModelError> {
    let mut schedule = Schedule::new(week_anchor);
    read_rows(text, |r: ScheduleRow| {
        schedule.assignments.insert(Assignment::new(r.ta_id, r.shift_id));
        Ok(())
    })?;
    Ok(schedule)
}

pub fn read_deliverables_csv(text: &str) -> Result<Vec<Deliverable>, ModelError> {
    let mut out = Vec::new();
    read_rows(text, |r: DeliverableRow| {
        if !(r.max_score.is_finite() && r.max_score > 0.0) {
            return Err(format!("max_score must be positive, got {}", r.max_score));
        }
        out.push(Deliverable {
            kind: parse_deliverable_kind(&r.kind)?,
            index: r.index,
            due_date: r.due_date,
            max_score: r.max_score,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn read_duty_csv(text: &str) -> Result<BTreeMap<Day, TaId>, ModelError> {
    let mut out = BTreeMap::new();
    read_rows(text, |r: DutyRow| {
        let day: Day = r.day.parse().map_err(|e: ModelError| e.to_string())?;
        if out.insert(day, TaId::from(r.ta_id)).is_some() {
            return Err(format!("{day} listed twice"));
        }
        Ok(())
    })?;
    Ok(out)
}

fn write_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
}

pub fn write_roster_csv(roster: &[TeachingAssistant]) -> String {
    write_rows(roster.iter().map(|ta| RosterRow {
        ta_id: ta.id.to_string(),
        name: ta.display_name.clone(),
        email: ta.email.clone(),
        role: role_name(ta.role).into(),
        team_id: ta.team_id.to_string(),
        profile_name: ta.profile.name.clone(),
        availability: ta.availability.iter().map(WeekSlot::token).collect::<Vec<_>>().join(";"),
    }))
}

pub fn write_shifts_csv(shifts: &[Shift]) -> String {
    write_rows(shifts.iter().map(|s| ShiftRow {
        shift_id: s.id.to_string(),
        kind: kind_name(s.kind).into(),
        day: s.slot.day.to_string(),
        start: format!("{:02}:{:02}", s.slot.start_minute / 60, s.slot.start_minute % 60),
        duration_min: s.slot.duration_min,
        modality: modality_name(s.modality).into(),
        required_staff: s.required_staff,
        section_ref: s.section_ref.clone().unwrap_or_default(),
    }))
}

pub fn write_schedule_csv(schedule: &Schedule) -> String {
    write_rows(schedule.assignments.iter().map(|a| ScheduleRow {
        ta_id: a.ta_id.to_string(),
        shift_id: a.shift_id.to_string(),
    }))
}

pub fn write_deliverables_csv(catalog: &[Deliverable]) -> String {
    write_rows(catalog.iter().map(|d| DeliverableRow {
        kind: d.kind.prefix().into(),
        index: d.index,
        due_date: d.due_date,
        max_score: d.max_score,
    }))
}

pub fn write_duty_csv(duty: &BTreeMap<Day, TaId>) -> String {
    write_rows(duty.iter().map(|(day, ta)| DutyRow { day: day.to_string(), ta_id: ta.to_string() }))
}
