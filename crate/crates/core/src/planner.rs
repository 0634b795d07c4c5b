//! Staffing arithmetic for scaling the team structure with enrollment.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub students_per_ta: u32,
    pub team_size: u32,
    pub functional_team_count: u32,
    pub students_per_regular_team: u32,
    /// Two sections of about 200 students per instructor.
    pub students_per_instructor: u32,
    pub instructor_layer_limit: u32,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            students_per_ta: 25,
            team_size: 6,
            functional_team_count: 5,
            students_per_regular_team: 150,
            students_per_instructor: 400,
            instructor_layer_limit: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgPlan {
    pub students: u32,
    pub ta_count: u32,
    pub functional_ta_count: u32,
    pub regular_ta_count: u32,
    pub regular_team_count: u32,
    pub instructor_count: u32,
    pub needs_extra_layer: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("enrollment must be at least one student")]
    NoStudents,
    #[error("planner parameter {0} must be at least 1")]
    InvalidParam(&'static str),
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        let fields = [
            ("students_per_ta", self.students_per_ta),
            ("team_size", self.team_size),
            ("functional_team_count", self.functional_team_count),
            ("students_per_regular_team", self.students_per_regular_team),
            ("students_per_instructor", self.students_per_instructor),
            ("instructor_layer_limit", self.instructor_layer_limit),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(PlanError::InvalidParam(name)),
            None => Ok(()),
        }
    }
}

pub fn plan_org(students: u32, params: &PlannerParams) -> Result<OrgPlan, PlanError> {
    if students == 0 {
        return Err(PlanError::NoStudents);
    }
    params.validate()?;
    let ta_count = students.div_ceil(params.students_per_ta);
    let functional_ta_count = params.functional_team_count * params.team_size;
    let regular_ta_count = ta_count.saturating_sub(functional_ta_count);
    let regular_team_count = regular_ta_count.div_ceil(params.team_size);
    let instructor_count = students.div_ceil(params.students_per_instructor);
    Ok(OrgPlan {
        students,
        ta_count,
        functional_ta_count,
        regular_ta_count,
        regular_team_count,
        instructor_count,
        needs_extra_layer: instructor_count > params.instructor_layer_limit,
    })
}

impl fmt::Display for OrgPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("students", self.students.to_string()),
            ("TAs", self.ta_count.to_string()),
            ("functional-team TAs", self.functional_ta_count.to_string()),
            ("regular-team TAs", self.regular_ta_count.to_string()),
            ("regular teams", self.regular_team_count.to_string()),
            ("instructors", self.instructor_count.to_string()),
            (
                "extra management layer",
                if self.needs_extra_layer { "needed" } else { "not needed" }.to_string(),
            ),
        ];
        for (label, value) in rows {
            writeln!(f, "{label:<24}{value:>10}")?;
        }
        Ok(())
    }
}
