//! Course operations engine: TA scheduling, live rescheduling workflow,
//! attendance monitoring, early-warning detection for struggling students and
//! staffing plans for large courses.

pub mod attendance;
pub mod constraints;
pub mod error;
pub mod ics;
pub mod io;
pub mod lost_students;
pub mod model;
pub mod ops;
pub mod planner;
pub mod solver;
pub mod synthetic;
pub mod workflow;

pub use constraints::{check_schedule, check_schedule_with, CoverageRule};
pub use error::{ModelError, RowReject};
pub use model::*;
pub use planner::{plan_org, OrgPlan, PlanError, PlannerParams};
pub use solver::{
    find_replacement_candidates, generate_schedule, InfeasibilityReport, ProofKind, SizeBound,
    SolveError, SolveOutcome, SolverConfig, TightTa,
};
pub use workflow::{
    apply_resolution, auto_claim, due_reverts, escalate, resolve, submit_request, DurationOfChange,
    DutyRoster, NewSwapRequest, RequestState, Resolution, SwapRequest, WorkflowError,
};
