//! iCalendar export of a TA's weekly shifts.

use std::fmt::Write as _;

use chrono::{Duration, NaiveDate, NaiveDateTime};

use crate::error::ModelError;
use crate::model::{week_monday, Modality, Schedule, Shift, ShiftKind, TaId, TeachingAssistant};

/// One recurring calendar entry, in course-local wall-clock time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CalendarEvent {
    pub uid: String,
    pub summary: String,
    pub dtstart: NaiveDateTime,
    pub dtend: NaiveDateTime,
    pub location_or_url: String,
    /// Weekly occurrences, 1 for a single event.
    pub weekly_count: u32,
}

fn escape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ';' => out.push_str("\\;"),
            ',' => out.push_str("\\,"),
            '\n' => out.push_str("\\n"),
            '\r' => {}
            c => out.push(c),
        }
    }
    out
}

/// Appends `line` folded at 75 octets, never splitting a UTF-8 sequence.
fn push_folded(out: &mut String, line: &str) {
    let mut budget = 75;
    let mut used = 0;
    for c in line.chars() {
        if used + c.len_utf8() > budget {
            out.push_str("\r\n ");
            // the leading space counts toward the continuation line
            budget = 74;
            used = 0;
        }
        out.push(c);
        used += c.len_utf8();
    }
    out.push_str("\r\n");
}

fn stamp(t: NaiveDateTime) -> String {
    t.format("%Y%m%dT%H%M%S").to_string()
}

/// Weekly events for every shift `ta` works, starting at the first occurrence
/// on or after `term_start` and ending with the term's last week.
pub fn calendar_events(
    ta: &TaId,
    schedule: &Schedule,
    shifts: &[Shift],
    term_start: NaiveDate,
    term_weeks: u32,
) -> Result<Vec<CalendarEvent>, ModelError> {
    let monday = week_monday(term_start);
    let mut mine: Vec<&Shift> = schedule
        .shifts_of(ta)
        .map(|id| shifts.iter().find(|s| &s.id == id).ok_or_else(|| ModelError::UnknownShift(id.to_string())))
        .collect::<Result<_, _>>()?;
    mine.sort_by(|a, b| (a.slot, &a.id).cmp(&(b.slot, &b.id)));

    let mut events = Vec::new();
    for shift in mine {
        let mut first = monday + Duration::days(shift.slot.day.offset());
        let mut count = term_weeks;
        if first < term_start {
            first += Duration::days(7);
            count = count.saturating_sub(1);
        }
        if count == 0 {
            continue;
        }
        let dtstart = first.and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(i64::from(shift.slot.start_minute));
        let online = schedule.effective_modality(shift) == Modality::Online;
        let what = match (&shift.kind, &shift.section_ref) {
            (ShiftKind::Lab, Some(section)) => format!("Lab {section}"),
            (ShiftKind::Lab, None) => "Lab".to_string(),
            (ShiftKind::OfficeHour, _) => "Office hour".to_string(),
        };
        events.push(CalendarEvent {
            uid: format!("{}-{}@courseops", ta, shift.id),
            summary: format!("{what} ({})", if online { "online" } else { "in person" }),
            dtstart,
            dtend: dtstart + Duration::minutes(i64::from(shift.slot.duration_min)),
            location_or_url: if online { "Online".into() } else { "In person".into() },
            weekly_count: count,
        });
    }
    Ok(events)
}

/// Renders a TA's schedule as an iCalendar document. Times are floating
/// (course-local); the output depends only on the inputs.
pub fn export_ics(
    ta_id: &TaId,
    schedule: &Schedule,
    roster: &[TeachingAssistant],
    shifts: &[Shift],
    term_start: NaiveDate,
    term_weeks: u32,
) -> Result<String, ModelError> {
    let ta = roster
        .iter()
        .find(|t| &t.id == ta_id)
        .ok_or_else(|| ModelError::UnknownTa(ta_id.to_string()))?;
    let events = calendar_events(ta_id, schedule, shifts, term_start, term_weeks)?;
    let dtstamp = format!("{}Z", stamp(term_start.and_hms_opt(0, 0, 0).expect("midnight")));

    let mut out = String::new();
    for line in [
        "BEGIN:VCALENDAR",
        "VERSION:2.0",
        "PRODID:-//courseops//schedule export//EN",
        "CALSCALE:GREGORIAN",
        "METHOD:PUBLISH",
    ] {
        push_folded(&mut out, line);
    }
    push_folded(&mut out, &format!("X-WR-CALNAME:{}", escape_text(&format!("Shifts: {}", ta.display_name))));
    for e in &events {
        push_folded(&mut out, "BEGIN:VEVENT");
        let mut lines = Vec::new();
        lines.push(format!("UID:{}", e.uid));
        lines.push(format!("DTSTAMP:{dtstamp}"));
        lines.push(format!("DTSTART:{}", stamp(e.dtstart)));
        lines.push(format!("DTEND:{}", stamp(e.dtend)));
        if e.weekly_count > 1 {
            lines.push(format!("RRULE:FREQ=WEEKLY;COUNT={}", e.weekly_count));
        }
        lines.push(format!("SUMMARY:{}", escape_text(&e.summary)));
        lines.push(format!("LOCATION:{}", escape_text(&e.location_or_url)));
        let mut description = String::new();
        let _ = write!(description, "{} for {} <{}>", e.summary, ta.display_name, ta.email);
        lines.push(format!("DESCRIPTION:{}", escape_text(&description)));
        for line in lines {
            push_folded(&mut out, &line);
        }
        push_folded(&mut out, "END:VEVENT");
    }
    push_folded(&mut out, "END:VCALENDAR");
    Ok(out)
}
