//! Initial schedule generation and replacement search.
//!
//! The model is one binary decision per (TA, shift). Shifts are branched on in
//! fail-first order (fewest currently eligible TAs), and for each shift every
//! combination of `required_staff` eligible TAs is tried, least-loaded first.
//! Subtrees are cut when some shift has too few candidates left or when the
//! remaining demand exceeds the remaining usable capacity of the roster.
//!
//! Within the exact size bound the search runs to completion, so an
//! `Exhausted` report is a proof of infeasibility. Larger instances use the
//! same search under growing node budgets with seeded tie shuffling between
//! restarts.
//!
//! Once a feasible schedule is found it is refined by single-assignment
//! replacement moves that strictly reduce the variance of
//! `assigned_hours / budget` across the roster.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{check_indexed, CoverageRule};
use crate::error::ModelError;
use crate::model::{
    index_roster, index_shifts, Assignment, Schedule, Shift, ShiftId, TaId, TeachingAssistant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBound {
    pub max_shifts: usize,
    pub max_tas: usize,
}

impl SizeBound {
    pub fn contains(&self, tas: usize, shifts: usize) -> bool {
        tas <= self.max_tas && shifts <= self.max_shifts
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub seed: u64,
    pub time_limit_ms: u64,
    pub exact_size_bound: SizeBound,
    pub overcover_allowed: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            seed: 0,
            time_limit_ms: 60_000,
            exact_size_bound: SizeBound { max_shifts: 12, max_tas: 8 },
            overcover_allowed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProofKind {
    /// The complete search found no schedule.
    Exhausted,
    /// Some shift or the whole week needs more TA-time than can be supplied.
    CapacityBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightTa {
    pub ta_id: TaId,
    pub budget_hours: f64,
    pub demanded_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub uncovered_shift_ids: Vec<ShiftId>,
    pub tight_tas: Vec<TightTa>,
    pub proof_kind: ProofKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveOutcome {
    Feasible { schedule: Schedule },
    Infeasible { report: InfeasibilityReport },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("time limit exceeded; best partial schedule covers {covered} of {total} shifts")]
    TimeLimitExceeded {
        best_partial: Schedule,
        covered: usize,
        total: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl From<ModelError> for SolveError {
    fn from(e: ModelError) -> Self {
        SolveError::InvalidInput(e.to_string())
    }
}

/// Produces a feasible weekly schedule or explains why none was found.
pub fn generate_schedule(
    roster: &[TeachingAssistant],
    shifts: &[Shift],
    config: &SolverConfig,
    week_anchor: NaiveDate,
) -> Result<SolveOutcome, SolveError> {
    if config.time_limit_ms == 0 {
        return Err(SolveError::InvalidInput("time_limit_ms must be positive".into()));
    }
    for ta in roster {
        ta.validate()?;
    }
    for shift in shifts {
        shift.validate()?;
    }
    let tas = index_roster(roster)?;
    let shift_map = index_shifts(shifts)?;
    let problem = Problem::build(tas.values().collect(), shift_map.values().collect());
    let deadline = Instant::now() + Duration::from_millis(config.time_limit_ms);
    let exact = config.exact_size_bound.contains(tas.len(), shift_map.len());

    if let Some(uncovered) = problem.capacity_shortfall() {
        let empty = SearchState::new(&problem);
        return Ok(SolveOutcome::Infeasible {
            report: problem.report(
                &empty,
                uncovered,
                if exact { ProofKind::Exhausted } else { ProofKind::CapacityBound },
            ),
        });
    }

    let mut search = Search::new(&problem, deadline);
    let found = if exact {
        search.run(None, None)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut budget = 20_000u64;
        let mut shuffle = false;
        loop {
            let attempt = search.run(Some(budget), shuffle.then_some(&mut rng));
            match attempt {
                Err(Stop::NodeBudget) => {
                    budget = budget.saturating_mul(2);
                    shuffle = true;
                }
                other => break other,
            }
        }
    };

    match found {
        Ok(Some(state)) => {
            let mut state = state;
            if improve_balance(&problem, &mut state, deadline).is_err() {
                // keep the feasible schedule found so far
            }
            let schedule = problem.to_schedule(&state, week_anchor);
            let coverage = CoverageRule::from_overcover_allowed(config.overcover_allowed);
            let violations = check_indexed(&schedule, &tas, &shift_map, coverage)?;
            if !violations.is_empty() {
                return Err(SolveError::InvalidInput(format!(
                    "solver produced an infeasible schedule: {}",
                    violations[0]
                )));
            }
            Ok(SolveOutcome::Feasible { schedule })
        }
        Ok(None) => {
            let best = search.best.clone().unwrap_or_else(|| SearchState::new(&problem));
            let uncovered = (0..problem.shift_count()).filter(|s| best.staff[*s].is_empty()).collect();
            Ok(SolveOutcome::Infeasible {
                report: problem.report(&best, uncovered, ProofKind::Exhausted),
            })
        }
        Err(_) => {
            let best = search.best.clone().unwrap_or_else(|| SearchState::new(&problem));
            let covered = best.staff.iter().filter(|s| !s.is_empty()).count();
            Err(SolveError::TimeLimitExceeded {
                best_partial: problem.to_schedule(&best, week_anchor),
                covered,
                total: problem.shift_count(),
            })
        }
    }
}

type Bits = Vec<u64>;

fn bits_new(n: usize) -> Bits {
    vec![0; n.div_ceil(64).max(1)]
}

fn bits_set(bits: &mut Bits, i: usize, on: bool) {
    if on {
        bits[i / 64] |= 1 << (i % 64);
    } else {
        bits[i / 64] &= !(1 << (i % 64));
    }
}

fn bits_intersect(a: &Bits, b: &Bits) -> bool {
    a.iter().zip(b).any(|(x, y)| x & y != 0)
}

struct Problem<'a> {
    tas: Vec<&'a TeachingAssistant>,
    budgets: Vec<i64>,
    shifts: Vec<&'a Shift>,
    minutes: Vec<i64>,
    required: Vec<usize>,
    /// Per shift: TAs whose availability covers it and whose budget fits it.
    eligible: Vec<Vec<usize>>,
    /// Per shift: the other shifts it overlaps.
    conflicts: Vec<Bits>,
}

impl<'a> Problem<'a> {
    fn build(tas: Vec<&'a TeachingAssistant>, shifts: Vec<&'a Shift>) -> Self {
        let budgets: Vec<i64> = tas.iter().map(|t| t.profile.regular_minutes()).collect();
        let minutes: Vec<i64> = shifts.iter().map(|s| s.minutes()).collect();
        let eligible = shifts
            .iter()
            .enumerate()
            .map(|(si, s)| {
                (0..tas.len())
                    .filter(|&t| minutes[si] <= budgets[t] && tas[t].is_available_for(&s.slot))
                    .collect()
            })
            .collect();
        let conflicts = shifts
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let mut bits = bits_new(shifts.len());
                for (j, b) in shifts.iter().enumerate() {
                    if i != j && a.slot.overlaps(&b.slot) {
                        bits_set(&mut bits, j, true);
                    }
                }
                bits
            })
            .collect();
        Problem {
            required: shifts.iter().map(|s| s.required_staff as usize).collect(),
            tas,
            budgets,
            shifts,
            minutes,
            eligible,
            conflicts,
        }
    }

    fn shift_count(&self) -> usize {
        self.shifts.len()
    }

    /// Shifts that cannot be staffed even with an empty schedule, or every
    /// shift when total demand exceeds the usable budget of the roster.
    fn capacity_shortfall(&self) -> Option<Vec<usize>> {
        let short: Vec<usize> = (0..self.shift_count())
            .filter(|&s| self.eligible[s].len() < self.required[s])
            .collect();
        if !short.is_empty() {
            return Some(short);
        }
        let state = SearchState::new(self);
        let open: Vec<usize> = (0..self.shift_count()).collect();
        let candidates: Vec<Vec<usize>> = open.iter().map(|&s| state.candidates(self, s)).collect();
        if !state.capacity_ok(self, &open, &candidates) {
            return Some(open);
        }
        None
    }

    fn to_schedule(&self, state: &SearchState, week_anchor: NaiveDate) -> Schedule {
        let assignments = state.staff.iter().enumerate().flat_map(|(s, staff)| {
            staff
                .iter()
                .map(move |&t| Assignment::new(self.tas[t].id.clone(), self.shifts[s].id.clone()))
        });
        Schedule::with_assignments(week_anchor, assignments)
    }

    fn report(&self, state: &SearchState, uncovered: Vec<usize>, proof_kind: ProofKind) -> InfeasibilityReport {
        let mut tight_tas = Vec::new();
        for t in 0..self.tas.len() {
            let open: i64 = uncovered
                .iter()
                .filter(|&&s| self.tas[t].is_available_for(&self.shifts[s].slot))
                .map(|&s| self.minutes[s])
                .sum();
            if open > 0 {
                tight_tas.push(TightTa {
                    ta_id: self.tas[t].id.clone(),
                    budget_hours: self.budgets[t] as f64 / 60.0,
                    demanded_hours: (state.load[t] + open) as f64 / 60.0,
                });
            }
        }
        InfeasibilityReport {
            uncovered_shift_ids: uncovered.iter().map(|&s| self.shifts[s].id.clone()).collect(),
            tight_tas,
            proof_kind,
        }
    }
}

#[derive(Debug, Clone)]
struct SearchState {
    load: Vec<i64>,
    occupied: Vec<Bits>,
    staff: Vec<Vec<usize>>,
}

impl SearchState {
    fn new(problem: &Problem) -> Self {
        SearchState {
            load: vec![0; problem.tas.len()],
            occupied: vec![bits_new(problem.shift_count()); problem.tas.len()],
            staff: vec![Vec::new(); problem.shift_count()],
        }
    }

    fn can_take(&self, problem: &Problem, t: usize, s: usize) -> bool {
        self.load[t] + problem.minutes[s] <= problem.budgets[t]
            && !bits_intersect(&self.occupied[t], &problem.conflicts[s])
    }

    fn candidates(&self, problem: &Problem, s: usize) -> Vec<usize> {
        problem.eligible[s]
            .iter()
            .copied()
            .filter(|&t| self.can_take(problem, t, s))
            .collect()
    }

    fn assign(&mut self, problem: &Problem, s: usize, tas: &[usize]) {
        for &t in tas {
            self.load[t] += problem.minutes[s];
            bits_set(&mut self.occupied[t], s, true);
        }
        self.staff[s] = tas.to_vec();
    }

    fn unassign(&mut self, problem: &Problem, s: usize) {
        for t in std::mem::take(&mut self.staff[s]) {
            self.load[t] -= problem.minutes[s];
            bits_set(&mut self.occupied[t], s, false);
        }
    }

    /// Remaining demand must fit in what each TA can still usefully give.
    fn capacity_ok(&self, problem: &Problem, open: &[usize], candidates: &[Vec<usize>]) -> bool {
        let mut reachable = vec![0i64; problem.tas.len()];
        let mut demand = 0i64;
        for (&s, cands) in open.iter().zip(candidates) {
            demand += problem.minutes[s] * problem.required[s] as i64;
            for &t in cands {
                reachable[t] += problem.minutes[s];
            }
        }
        let supply: i64 = reachable
            .iter()
            .enumerate()
            .map(|(t, &r)| r.min(problem.budgets[t] - self.load[t]))
            .sum();
        demand <= supply
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stop {
    Timeout,
    NodeBudget,
}

struct Search<'p, 'a> {
    problem: &'p Problem<'a>,
    deadline: Instant,
    nodes: u64,
    node_budget: Option<u64>,
    best: Option<SearchState>,
    best_covered: usize,
}

impl<'p, 'a> Search<'p, 'a> {
    fn new(problem: &'p Problem<'a>, deadline: Instant) -> Self {
        Search { problem, deadline, nodes: 0, node_budget: None, best: None, best_covered: 0 }
    }

    fn run(
        &mut self,
        node_budget: Option<u64>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Option<SearchState>, Stop> {
        self.nodes = 0;
        self.node_budget = node_budget;
        let mut state = SearchState::new(self.problem);
        let mut open: Vec<usize> = (0..self.problem.shift_count()).collect();
        let mut rng = rng;
        if self.dfs(&mut state, &mut open, 0, &mut rng)? {
            Ok(Some(state))
        } else {
            Ok(None)
        }
    }

    fn dfs(
        &mut self,
        state: &mut SearchState,
        open: &mut Vec<usize>,
        covered: usize,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Result<bool, Stop> {
        self.nodes += 1;
        if self.nodes.is_multiple_of(256) && Instant::now() >= self.deadline {
            return Err(Stop::Timeout);
        }
        if self.node_budget.is_some_and(|b| self.nodes > b) {
            return Err(Stop::NodeBudget);
        }
        if covered >= self.best_covered && (self.best.is_none() || covered > self.best_covered) {
            self.best_covered = covered;
            self.best = Some(state.clone());
        }
        if open.is_empty() {
            return Ok(true);
        }

        let problem = self.problem;
        let candidates: Vec<Vec<usize>> = open.iter().map(|&s| state.candidates(problem, s)).collect();
        let mut pick = 0;
        for (i, &s) in open.iter().enumerate() {
            let slack = candidates[i].len() as i64 - problem.required[s] as i64;
            if slack < 0 {
                return Ok(false);
            }
            let best_slack = candidates[pick].len() as i64 - problem.required[open[pick]] as i64;
            if slack < best_slack || (slack == best_slack && s < open[pick]) {
                pick = i;
            }
        }
        if !state.capacity_ok(problem, open, &candidates) {
            return Ok(false);
        }

        let shift = open.swap_remove(pick);
        let mut cands = candidates[pick].clone();
        if let Some(rng) = rng.as_deref_mut() {
            cands.shuffle(rng);
        }
        // least relative load after taking the shift first, then TA id
        cands.sort_by(|&a, &b| {
            let la = (state.load[a] + problem.minutes[shift]) as i128 * problem.budgets[b] as i128;
            let lb = (state.load[b] + problem.minutes[shift]) as i128 * problem.budgets[a] as i128;
            la.cmp(&lb).then_with(|| if rng.is_some() { Ordering::Equal } else { a.cmp(&b) })
        });

        let k = problem.required[shift];
        let mut combo: Vec<usize> = (0..k).collect();
        let mut chosen = Vec::with_capacity(k);
        loop {
            chosen.clear();
            chosen.extend(combo.iter().map(|&i| cands[i]));
            state.assign(problem, shift, &chosen);
            let result = self.dfs(state, open, covered + 1, rng);
            match result {
                Ok(true) => return Ok(true),
                Ok(false) => state.unassign(problem, shift),
                Err(stop) => {
                    state.unassign(problem, shift);
                    open.push(shift);
                    let last = open.len() - 1;
                    open.swap(pick, last);
                    return Err(stop);
                }
            }
            if !next_combination(&mut combo, cands.len()) {
                break;
            }
        }
        open.push(shift);
        let last = open.len() - 1;
        open.swap(pick, last);
        Ok(false)
    }
}

/// Advances `combo` to the next k-subset of `0..n` in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Sum and sum of squares of per-TA utilisation for TAs with a budget.
struct Balance {
    sum: f64,
    sum_sq: f64,
    n: f64,
}

impl Balance {
    fn of(problem: &Problem, load: &[i64]) -> Self {
        let mut b = Balance { sum: 0.0, sum_sq: 0.0, n: 0.0 };
        for (t, &l) in load.iter().enumerate() {
            if problem.budgets[t] > 0 {
                let r = l as f64 / problem.budgets[t] as f64;
                b.sum += r;
                b.sum_sq += r * r;
                b.n += 1.0;
            }
        }
        b
    }

    fn variance_with(&self, changes: [(f64, f64); 2]) -> f64 {
        let (mut sum, mut sum_sq) = (self.sum, self.sum_sq);
        for (old, new) in changes {
            sum += new - old;
            sum_sq += new * new - old * old;
        }
        if self.n == 0.0 {
            return 0.0;
        }
        let mean = sum / self.n;
        sum_sq / self.n - mean * mean
    }
}

const MAX_BALANCE_MOVES: usize = 5_000;
const IMPROVEMENT_EPS: f64 = 1e-12;

/// Best-improvement replacement moves until no move strictly lowers the
/// utilisation variance. Moves are scanned in (shift, outgoing TA, incoming
/// TA) index order, so ties resolve to the lexicographically first move.
fn improve_balance(problem: &Problem, state: &mut SearchState, deadline: Instant) -> Result<(), Stop> {
    let ratio = |t: usize, load: i64| load as f64 / problem.budgets[t] as f64;
    for _ in 0..MAX_BALANCE_MOVES {
        if Instant::now() >= deadline {
            return Err(Stop::Timeout);
        }
        let balance = Balance::of(problem, &state.load);
        let current = balance.variance_with([(0.0, 0.0), (0.0, 0.0)]);
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for s in 0..problem.shift_count() {
            let d = problem.minutes[s];
            for &out in &state.staff[s] {
                for &inc in &problem.eligible[s] {
                    if state.staff[s].contains(&inc) || !state.can_take(problem, inc, s) {
                        continue;
                    }
                    let v = balance.variance_with([
                        (ratio(out, state.load[out]), ratio(out, state.load[out] - d)),
                        (ratio(inc, state.load[inc]), ratio(inc, state.load[inc] + d)),
                    ]);
                    let threshold = best.map_or(current - IMPROVEMENT_EPS, |b| b.0 - IMPROVEMENT_EPS);
                    if v < threshold {
                        best = Some((v, s, out, inc));
                    }
                }
            }
        }
        let Some((_, s, out, inc)) = best else {
            return Ok(());
        };
        let mut staff: Vec<usize> = state.staff[s].iter().copied().filter(|&t| t != out).collect();
        staff.push(inc);
        staff.sort_unstable();
        state.unassign(problem, s);
        state.assign(problem, s, &staff);
    }
    Ok(())
}

/// TAs who could cover `target` without creating any violation, least loaded first.
pub fn find_replacement_candidates(
    schedule: &Schedule,
    roster: &[TeachingAssistant],
    shifts: &[Shift],
    target: &ShiftId,
    excluded: &BTreeSet<TaId>,
) -> Result<Vec<TaId>, ModelError> {
    let shift_map = index_shifts(shifts)?;
    let target_shift = shift_map
        .get(target)
        .ok_or_else(|| ModelError::UnknownShift(target.to_string()))?;
    let mut eligible: Vec<(i64, TaId)> = Vec::new();
    for ta in roster {
        if excluded.contains(&ta.id) || schedule.is_assigned(&ta.id, target) {
            continue;
        }
        let mut load = 0;
        let mut clash = false;
        for shift_id in schedule.shifts_of(&ta.id) {
            let shift = shift_map
                .get(shift_id)
                .ok_or_else(|| ModelError::UnknownShift(shift_id.to_string()))?;
            load += shift.minutes();
            clash |= shift.slot.overlaps(&target_shift.slot);
        }
        if !clash
            && ta.is_available_for(&target_shift.slot)
            && ta.profile.regular_minutes() - load >= target_shift.minutes()
        {
            eligible.push((load, ta.id.clone()));
        }
    }
    eligible.sort();
    Ok(eligible.into_iter().map(|(_, id)| id).collect())
}
