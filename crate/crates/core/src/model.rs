//! Domain types shared by every subsystem: staff, time profiles, shifts and
//! weekly schedules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a teaching assistant.
    TaId
);
string_id!(
    /// Identifier of a staffed shift (office hour or lab section).
    ShiftId
);
string_id!(TeamId);
string_id!(
    /// Identifier of a swap request.
    RequestId
);
string_id!(StudentId);
string_id!(
    /// Identifier of a lost-student case.
    CaseId
);

/// Weekly hours stored as whole half-hours so budget arithmetic stays exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HalfHours(pub i32);

impl HalfHours {
    pub const ZERO: HalfHours = HalfHours(0);

    pub const fn from_hours(hours: i32) -> Self {
        HalfHours(hours * 2)
    }

    pub fn minutes(self) -> i64 {
        i64::from(self.0) * 30
    }

    pub fn as_hours(self) -> f64 {
        f64::from(self.0) / 2.0
    }
}

impl std::ops::Add for HalfHours {
    type Output = HalfHours;
    fn add(self, rhs: Self) -> Self {
        HalfHours(self.0 + rhs.0)
    }
}

impl std::iter::Sum for HalfHours {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(HalfHours::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for HalfHours {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}", self.as_hours())
        }
    }
}

/// Formats a minute count as hours without trailing zeros ("6", "2.5", "1.25").
pub fn format_minutes_as_hours(minutes: i64) -> String {
    format!("{}", minutes as f64 / 60.0)
}

/// How a TA's weekly contract splits across duties.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeProfile {
    pub name: String,
    pub contract_hours: HalfHours,
    pub regular_task_hours: HalfHours,
    pub meeting_attend_hours: HalfHours,
    pub meeting_lead_hours: HalfHours,
    pub functional_task_hours: HalfHours,
    pub training_participate_hours: HalfHours,
    pub training_facilitate_hours: HalfHours,
}

/// Contract sizes a profile may declare.
pub const CONTRACT_SIZES: [HalfHours; 3] = [
    HalfHours::from_hours(6),
    HalfHours::from_hours(9),
    HalfHours::from_hours(12),
];

impl TimeProfile {
    fn components(&self) -> [(&'static str, HalfHours); 6] {
        [
            ("regular_task_hours", self.regular_task_hours),
            ("meeting_attend_hours", self.meeting_attend_hours),
            ("meeting_lead_hours", self.meeting_lead_hours),
            ("functional_task_hours", self.functional_task_hours),
            ("training_participate_hours", self.training_participate_hours),
            ("training_facilitate_hours", self.training_facilitate_hours),
        ]
    }

    pub fn component_sum(&self) -> HalfHours {
        self.components().iter().map(|(_, h)| *h).sum()
    }

    /// Weekly minutes available for schedulable (regular) duties.
    pub fn regular_minutes(&self) -> i64 {
        self.regular_task_hours.minutes()
    }
}

#[allow(clippy::too_many_arguments)]
const fn profile_row(
    contract: i32,
    regular: i32,
    attend: i32,
    lead: i32,
    functional: i32,
    participate: i32,
    facilitate: i32,
) -> [HalfHours; 7] {
    // arguments are half-hour counts
    [
        HalfHours(contract),
        HalfHours(regular),
        HalfHours(attend),
        HalfHours(lead),
        HalfHours(functional),
        HalfHours(participate),
        HalfHours(facilitate),
    ]
}

const STANDARD_ROWS: [(&str, [HalfHours; 7]); 6] = [
    ("FuncLead12", profile_row(24, 8, 2, 2, 8, 0, 4)),
    ("FuncMember12", profile_row(24, 16, 2, 0, 5, 1, 0)),
    ("FuncMember6", profile_row(12, 4, 2, 0, 5, 1, 0)),
    ("RegLead12", profile_row(24, 18, 1, 1, 0, 0, 4)),
    ("RegMember12", profile_row(24, 22, 1, 0, 0, 1, 0)),
    ("RegMember6", profile_row(12, 10, 1, 0, 0, 1, 0)),
];

/// The six standard time-allocation profiles for 6 h and 12 h contracts.
pub fn standard_profiles() -> Vec<TimeProfile> {
    STANDARD_ROWS
        .iter()
        .map(|(name, row)| TimeProfile {
            name: (*name).to_owned(),
            contract_hours: row[0],
            regular_task_hours: row[1],
            meeting_attend_hours: row[2],
            meeting_lead_hours: row[3],
            functional_task_hours: row[4],
            training_participate_hours: row[5],
            training_facilitate_hours: row[6],
        })
        .collect()
}

/// Looks up one of the standard profiles by name.
pub fn standard_profile(name: &str) -> Option<TimeProfile> {
    standard_profiles().into_iter().find(|p| p.name == name)
}

/// Returns one message per violated profile rule; empty when the profile is valid.
pub fn validate_profile(profile: &TimeProfile) -> Vec<String> {
    let mut messages = Vec::new();
    for (field, hours) in profile.components() {
        if hours.0 < 0 {
            messages.push(format!("{field} is negative ({hours})"));
        }
    }
    if !CONTRACT_SIZES.contains(&profile.contract_hours) {
        messages.push(format!(
            "contract {} is not one of 6, 9, 12",
            profile.contract_hours
        ));
    }
    let sum = profile.component_sum();
    if sum != profile.contract_hours {
        messages.push(format!("sum {sum} ≠ contract {}", profile.contract_hours));
    }
    messages
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FunctionalArea {
    Communication,
    Content,
    LostStudent,
    Plagiarism,
    Scheduling,
}

impl FunctionalArea {
    pub const ALL: [FunctionalArea; 5] = [
        FunctionalArea::Communication,
        FunctionalArea::Content,
        FunctionalArea::LostStudent,
        FunctionalArea::Plagiarism,
        FunctionalArea::Scheduling,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "area")]
pub enum TeamKind {
    Regular,
    Functional(FunctionalArea),
}

pub const MAX_TEAM_MEMBERS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Team {
    pub id: TeamId,
    pub kind: TeamKind,
    pub lead_ta: TaId,
    pub member_ids: Vec<TaId>,
}

impl Team {
    pub fn new(
        id: TeamId,
        kind: TeamKind,
        lead_ta: TaId,
        member_ids: Vec<TaId>,
    ) -> Result<Self, ModelError> {
        if member_ids.is_empty() || member_ids.len() > MAX_TEAM_MEMBERS {
            return Err(ModelError::Invalid(format!(
                "team {id} has {} members, expected 1..={MAX_TEAM_MEMBERS}",
                member_ids.len()
            )));
        }
        if member_ids.contains(&lead_ta) {
            return Err(ModelError::Invalid(format!(
                "team {id} lists its lead {lead_ta} as a member"
            )));
        }
        Ok(Team { id, kind, lead_ta, member_ids })
    }

    /// Members in id order, the order used for round-robin work distribution.
    pub fn members_by_id(&self) -> Vec<TaId> {
        let mut members = self.member_ids.clone();
        members.sort();
        members.dedup();
        members
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaRole {
    Lead,
    Member,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeachingAssistant {
    pub id: TaId,
    pub display_name: String,
    pub email: String,
    pub role: TaRole,
    pub team_id: TeamId,
    pub profile: TimeProfile,
    pub availability: Vec<WeekSlot>,
}

impl TeachingAssistant {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.role == TaRole::Lead
            && self.profile.meeting_lead_hours.0 <= 0
            && self.profile.training_facilitate_hours.0 <= 0
        {
            return Err(ModelError::Invalid(format!(
                "lead {} has a profile with no leading or facilitating hours",
                self.id
            )));
        }
        let distinct: BTreeSet<_> = self.availability.iter().collect();
        if distinct.len() != self.availability.len() {
            return Err(ModelError::Invalid(format!(
                "{} has duplicate availability slots",
                self.id
            )));
        }
        let messages = validate_profile(&self.profile);
        if !messages.is_empty() {
            return Err(ModelError::Invalid(format!(
                "{} profile {}: {}",
                self.id,
                self.profile.name,
                messages.join("; ")
            )));
        }
        Ok(())
    }

    /// True when the union of availability slots covers `slot` entirely.
    pub fn is_available_for(&self, slot: &WeekSlot) -> bool {
        let mut covered_until = slot.start_minute;
        let mut same_day: Vec<_> = self
            .availability
            .iter()
            .filter(|a| a.day == slot.day)
            .map(|a| (a.start_minute, a.end_minute()))
            .collect();
        same_day.sort_unstable();
        for (start, end) in same_day {
            if start > covered_until {
                break;
            }
            covered_until = covered_until.max(end);
            if covered_until >= slot.end_minute() {
                return true;
            }
        }
        covered_until >= slot.end_minute()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Day {
    Mon,
    Tue,
    Wed,
    Thu,
    Fri,
    Sat,
    Sun,
}

impl Day {
    pub const ALL: [Day; 7] = [Day::Mon, Day::Tue, Day::Wed, Day::Thu, Day::Fri, Day::Sat, Day::Sun];
    pub const WEEKDAYS: [Day; 5] = [Day::Mon, Day::Tue, Day::Wed, Day::Thu, Day::Fri];

    /// Days since Monday.
    pub fn offset(self) -> i64 {
        self as i64
    }

    pub fn of(date: NaiveDate) -> Day {
        Day::ALL[date.weekday().num_days_from_monday() as usize]
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            Day::Mon => "MON",
            Day::Tue => "TUE",
            Day::Wed => "WED",
            Day::Thu => "THU",
            Day::Fri => "FRI",
            Day::Sat => "SAT",
            Day::Sun => "SUN",
        }
    }
}

impl std::str::FromStr for Day {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let day = match lower.get(..3).unwrap_or("") {
            "mon" => Day::Mon,
            "tue" => Day::Tue,
            "wed" => Day::Wed,
            "thu" => Day::Thu,
            "fri" => Day::Fri,
            "sat" => Day::Sat,
            "sun" => Day::Sun,
            _ => return Err(ModelError::Parse(format!("unknown day {s:?}"))),
        };
        Ok(day)
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.abbrev()[..1])?;
        f.write_str(&self.abbrev()[1..].to_ascii_lowercase())
    }
}

/// Monday of the week containing `date`.
pub fn week_monday(date: NaiveDate) -> NaiveDate {
    date - Duration::days(i64::from(date.weekday().num_days_from_monday()))
}

pub const MINUTES_PER_DAY: u16 = 1440;

/// A recurring weekly time window that never crosses midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawWeekSlot")]
pub struct WeekSlot {
    pub day: Day,
    pub start_minute: u16,
    pub duration_min: u16,
}

#[derive(Deserialize)]
struct RawWeekSlot {
    day: Day,
    start_minute: u16,
    duration_min: u16,
}

impl TryFrom<RawWeekSlot> for WeekSlot {
    type Error = ModelError;
    fn try_from(raw: RawWeekSlot) -> Result<Self, Self::Error> {
        WeekSlot::new(raw.day, raw.start_minute, raw.duration_min)
    }
}

impl WeekSlot {
    pub fn new(day: Day, start_minute: u16, duration_min: u16) -> Result<Self, ModelError> {
        if duration_min == 0 {
            return Err(ModelError::Invalid("slot duration must be positive".into()));
        }
        if u32::from(start_minute) + u32::from(duration_min) > u32::from(MINUTES_PER_DAY) {
            return Err(ModelError::Invalid(format!(
                "slot {day} {start_minute}+{duration_min} crosses midnight"
            )));
        }
        Ok(WeekSlot { day, start_minute, duration_min })
    }

    pub fn end_minute(&self) -> u16 {
        self.start_minute + self.duration_min
    }

    /// Half-open interval intersection on the same day.
    pub fn overlaps(&self, other: &WeekSlot) -> bool {
        self.day == other.day
            && self.start_minute < other.end_minute()
            && other.start_minute < self.end_minute()
    }

    /// Parses a `DAY:HH:MM+MIN` token such as `Mon:08:00+60`.
    pub fn parse_token(token: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::Parse(format!("bad slot token {token:?}, expected DAY:HH:MM+MIN"));
        let (day, rest) = token.trim().split_once(':').ok_or_else(bad)?;
        let (time, duration) = rest.split_once('+').ok_or_else(bad)?;
        let start = parse_clock(time).ok_or_else(bad)?;
        let duration: u16 = duration.trim().parse().map_err(|_| bad())?;
        WeekSlot::new(day.parse()?, start, duration)
    }

    pub fn token(&self) -> String {
        format!(
            "{}:{:02}:{:02}+{}",
            self.day,
            self.start_minute / 60,
            self.start_minute % 60,
            self.duration_min
        )
    }
}

/// Local wall-clock start of `slot` on `date`, converted to UTC in `tz`.
///
/// Nonexistent local times (spring-forward gaps) resolve to the instant one
/// hour later; ambiguous ones to the earlier instant.
pub fn local_instant(
    date: NaiveDate,
    minute_of_day: u16,
    tz: chrono_tz::Tz,
) -> chrono::DateTime<chrono::Utc> {
    use chrono::TimeZone;
    let naive = date.and_hms_opt(0, 0, 0).expect("midnight") + Duration::minutes(i64::from(minute_of_day));
    match tz.from_local_datetime(&naive) {
        chrono::LocalResult::Single(t) => t.with_timezone(&chrono::Utc),
        chrono::LocalResult::Ambiguous(early, _) => early.with_timezone(&chrono::Utc),
        chrono::LocalResult::None => tz
            .from_local_datetime(&(naive + Duration::hours(1)))
            .earliest()
            .expect("one hour past a gap is valid")
            .with_timezone(&chrono::Utc),
    }
}

/// Parses `HH:MM` into minutes since midnight.
pub fn parse_clock(text: &str) -> Option<u16> {
    let (h, m) = text.trim().split_once(':')?;
    let h: u16 = h.parse().ok()?;
    let m: u16 = m.parse().ok()?;
    (h < 24 && m < 60).then_some(h * 60 + m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ShiftKind {
    OfficeHour,
    Lab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    InPerson,
    Online,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shift {
    pub id: ShiftId,
    pub kind: ShiftKind,
    pub slot: WeekSlot,
    pub modality: Modality,
    pub required_staff: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_ref: Option<String>,
}

impl Shift {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.required_staff < 1 {
            return Err(ModelError::Invalid(format!("shift {} requires no staff", self.id)));
        }
        if self.kind == ShiftKind::Lab && self.section_ref.as_deref().is_none_or(str::is_empty) {
            return Err(ModelError::Invalid(format!("lab {} has no section_ref", self.id)));
        }
        Ok(())
    }

    pub fn minutes(&self) -> i64 {
        i64::from(self.slot.duration_min)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub ta_id: TaId,
    pub shift_id: ShiftId,
}

impl Assignment {
    pub fn new(ta_id: impl Into<TaId>, shift_id: impl Into<ShiftId>) -> Self {
        Assignment { ta_id: ta_id.into(), shift_id: shift_id.into() }
    }
}

/// One canonical week of staffing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub assignments: BTreeSet<Assignment>,
    pub week_anchor: NaiveDate,
    /// In-person shifts temporarily held online.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub online_overrides: BTreeSet<ShiftId>,
}

impl Schedule {
    pub fn new(week_anchor: NaiveDate) -> Self {
        Schedule {
            assignments: BTreeSet::new(),
            week_anchor,
            online_overrides: BTreeSet::new(),
        }
    }

    pub fn with_assignments(
        week_anchor: NaiveDate,
        assignments: impl IntoIterator<Item = Assignment>,
    ) -> Self {
        let mut schedule = Schedule::new(week_anchor);
        schedule.assignments.extend(assignments);
        schedule
    }

    pub fn is_assigned(&self, ta: &TaId, shift: &ShiftId) -> bool {
        self.assignments
            .iter()
            .any(|a| &a.ta_id == ta && &a.shift_id == shift)
    }

    pub fn staff_of<'a>(&'a self, shift: &'a ShiftId) -> impl Iterator<Item = &'a TaId> + 'a {
        self.assignments
            .iter()
            .filter(move |a| &a.shift_id == shift)
            .map(|a| &a.ta_id)
    }

    pub fn shifts_of<'a>(&'a self, ta: &'a TaId) -> impl Iterator<Item = &'a ShiftId> + 'a {
        self.assignments
            .iter()
            .filter(move |a| &a.ta_id == ta)
            .map(|a| &a.shift_id)
    }

    pub fn effective_modality(&self, shift: &Shift) -> Modality {
        if self.online_overrides.contains(&shift.id) {
            Modality::Online
        } else {
            shift.modality
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    Overlap,
    Unavailable,
    Undercovered,
    Overcovered,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subject {
    Ta(TaId),
    Shift(ShiftId),
}

impl Subject {
    pub fn id(&self) -> &str {
        match self {
            Subject::Ta(id) => id.as_str(),
            Subject::Shift(id) => id.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: Subject,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {}: {}", self.kind, self.subject.id(), self.detail)
    }
}

/// Roster and shift set indexed by id.
#[derive(Debug, Clone, Copy)]
pub struct Catalog<'a> {
    pub tas: &'a BTreeMap<TaId, TeachingAssistant>,
    pub shifts: &'a BTreeMap<ShiftId, Shift>,
}

/// Indexes a roster by id, rejecting duplicates.
pub fn index_roster(roster: &[TeachingAssistant]) -> Result<BTreeMap<TaId, TeachingAssistant>, ModelError> {
    let mut map = BTreeMap::new();
    for ta in roster {
        if map.insert(ta.id.clone(), ta.clone()).is_some() {
            return Err(ModelError::Invalid(format!("duplicate TA id {}", ta.id)));
        }
    }
    Ok(map)
}

/// Indexes shifts by id, rejecting duplicates.
pub fn index_shifts(shifts: &[Shift]) -> Result<BTreeMap<ShiftId, Shift>, ModelError> {
    let mut map = BTreeMap::new();
    for shift in shifts {
        if map.insert(shift.id.clone(), shift.clone()).is_some() {
            return Err(ModelError::Invalid(format!("duplicate shift id {}", shift.id)));
        }
    }
    Ok(map)
}
