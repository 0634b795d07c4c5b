//! A small, independent iCalendar reader: just enough to recover weekly
//! events from an export.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use courseops_core::{Day, Schedule, Shift, TaId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadEvent {
    pub uid: String,
    pub summary: String,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub count: u32,
}

impl ReadEvent {
    /// (weekday, minutes after midnight, duration in minutes)
    pub fn weekly_slot(&self) -> (Weekday, u32, i64) {
        let minute = self.start.time().signed_duration_since(chrono::NaiveTime::MIN).num_minutes() as u32;
        (self.start.weekday(), minute, (self.end - self.start).num_minutes())
    }

    pub fn occurrences(&self) -> Vec<NaiveDate> {
        (0..self.count).map(|k| self.start.date() + chrono::Duration::weeks(i64::from(k))).collect()
    }
}

/// Undoes line folding: a CRLF followed by a space or tab continues the line.
pub fn unfold(text: &str) -> Result<Vec<String>, String> {
    if !text.ends_with("\r\n") {
        return Err("document does not end with CRLF".into());
    }
    let mut lines: Vec<String> = Vec::new();
    for raw in text[..text.len() - 2].split("\r\n") {
        if raw.contains('\n') || raw.contains('\r') {
            return Err(format!("bare line break in {raw:?}"));
        }
        if raw.len() > 75 {
            return Err(format!("physical line longer than 75 octets: {raw:?}"));
        }
        match raw.strip_prefix(' ').or_else(|| raw.strip_prefix('\t')) {
            Some(rest) => lines.last_mut().ok_or("continuation before any line")?.push_str(rest),
            None => lines.push(raw.to_string()),
        }
    }
    Ok(lines)
}

fn unescape(value: &str) -> String {
    let mut out = String::new();
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') | Some('N') => out.push('\n'),
                Some(other) => out.push(other),
                None => {}
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn datetime(value: &str) -> Result<NaiveDateTime, String> {
    NaiveDateTime::parse_from_str(value, "%Y%m%dT%H%M%S").map_err(|e| format!("{value}: {e}"))
}

pub fn read_events(text: &str) -> Result<Vec<ReadEvent>, String> {
    let lines = unfold(text)?;
    if lines.first().map(String::as_str) != Some("BEGIN:VCALENDAR") || lines.last().map(String::as_str) != Some("END:VCALENDAR") {
        return Err("not wrapped in VCALENDAR".into());
    }
    let mut events = Vec::new();
    let mut current: Option<Vec<(String, String)>> = None;
    for line in &lines {
        let (name, value) = line.split_once(':').ok_or_else(|| format!("no colon in {line:?}"))?;
        let name = name.split(';').next().unwrap().to_ascii_uppercase();
        match (name.as_str(), value) {
            ("BEGIN", "VEVENT") => current = Some(Vec::new()),
            ("END", "VEVENT") => {
                let props = current.take().ok_or("END:VEVENT without BEGIN")?;
                let get = |key: &str| props.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
                let count = match get("RRULE") {
                    None => 1,
                    Some(rule) => {
                        let parts: Vec<(&str, &str)> = rule.split(';').filter_map(|p| p.split_once('=')).collect();
                        if !parts.contains(&("FREQ", "WEEKLY")) {
                            return Err(format!("unsupported rule {rule}"));
                        }
                        parts
                            .iter()
                            .find(|(k, _)| *k == "COUNT")
                            .ok_or("rule without COUNT")?
                            .1
                            .parse()
                            .map_err(|e| format!("{e}"))?
                    }
                };
                events.push(ReadEvent {
                    uid: get("UID").ok_or("missing UID")?.to_string(),
                    summary: unescape(get("SUMMARY").unwrap_or("")),
                    start: datetime(get("DTSTART").ok_or("missing DTSTART")?)?,
                    end: datetime(get("DTEND").ok_or("missing DTEND")?)?,
                    count,
                });
            }
            _ => {
                if let Some(props) = current.as_mut() {
                    props.push((name, value.to_string()));
                }
            }
        }
    }
    Ok(events)
}

fn weekday(day: Day) -> Weekday {
    match day {
        Day::Mon => Weekday::Mon,
        Day::Tue => Weekday::Tue,
        Day::Wed => Weekday::Wed,
        Day::Thu => Weekday::Thu,
        Day::Fri => Weekday::Fri,
        Day::Sat => Weekday::Sat,
        Day::Sun => Weekday::Sun,
    }
}

/// Re-reads `ics` and checks it carries exactly `ta`'s weekly assignments,
/// each repeating on every in-term date from term_start on. The term is the
/// `weeks` calendar weeks starting with term_start's week. Returns the number
/// of events read.
pub fn verify_export(
    ics: &str,
    ta: &TaId,
    schedule: &Schedule,
    shifts: &[Shift],
    term_start: NaiveDate,
    weeks: u32,
) -> Result<usize, String> {
    let events = read_events(ics)?;
    let mut expected: BTreeMap<String, (Weekday, u32, i64)> = BTreeMap::new();
    for a in schedule.assignments.iter().filter(|a| &a.ta_id == ta) {
        let shift = shifts.iter().find(|s| s.id == a.shift_id).ok_or("unknown shift")?;
        let slot = (weekday(shift.slot.day), u32::from(shift.slot.start_minute), i64::from(shift.slot.duration_min));
        expected.insert(format!("{ta}-{}@courseops", shift.id), slot);
    }
    let got: BTreeMap<String, (Weekday, u32, i64)> = events.iter().map(|e| (e.uid.clone(), e.weekly_slot())).collect();
    if got != expected {
        return Err(format!("{ta}: read {got:?}, assigned {expected:?}"));
    }
    let first_monday = term_start - Duration::days(i64::from(term_start.weekday().num_days_from_monday()));
    for e in &events {
        let dates = e.occurrences();
        let in_term: Vec<NaiveDate> = (0..i64::from(weeks) * 7)
            .map(|d| first_monday + Duration::days(d))
            .filter(|d| *d >= term_start && d.weekday() == e.start.weekday())
            .collect();
        if dates != in_term {
            return Err(format!("{}: occurrences {dates:?}, expected {in_term:?}", e.uid));
        }
    }
    Ok(events.len())
}
