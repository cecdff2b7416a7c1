//! LASSO homotopy: follows the piecewise-linear minimizer of
//! `½‖y - A x‖² + λ‖x‖₁` as `λ` decreases from `λ_max`, one breakpoint at a
//! time.
//!
//! Along a segment with active set `S` and signs `s`,
//! `x_S(λ) = (A_Sᵀ A_S)⁻¹ (A_Sᵀ y - λ s)`. The segment ends at the largest
//! `λ' < λ` where an inactive correlation reaches `±λ'` (insertion) or an
//! active coefficient crosses zero (deletion). Columns need not have unit
//! norm; everything is expressed with raw inner products.

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::linalg::{axpy, dot, DenseMatrix, GramCholesky, LinalgError};

/// Breakpoints closer than this (relative to `max(1, λ_max)`) are simultaneous.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Direction denominators `1 ∓ a_jᵀ A_S d` at or below this never trigger.
const MIN_DENOMINATOR: f64 = 1e-12;

/// Default step budget multiplier (`10 × target` or `10 × cols`).
pub const BUDGET_FACTOR: usize = 10;

#[derive(Debug, Error)]
pub enum HomotopyError {
    #[error("design column {index} is identically zero")]
    ZeroColumn { index: usize },
    #[error("target has length {found}, design has {expected} rows")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("penalty must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    /// No breakpoint remains in `(0, λ)`; the state now sits at `λ = 0`.
    #[error("no further breakpoint; path reached lambda = 0")]
    NoEvent,
    /// The active set already has as many atoms as the design has rows.
    #[error("active set reached the rank limit")]
    RankLimit,
    #[error("step budget of {budget} exhausted")]
    StepBudgetExceeded {
        budget: usize,
        state: Box<LassoPathState>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, HomotopyError>;

/// Design matrix and observation vector of one LASSO problem.
#[derive(Debug, Clone)]
pub struct LassoProblem<'a> {
    design: &'a DenseMatrix,
    target: &'a [f64],
    // Aᵀ y
    correlations: Vec<f64>,
}

impl<'a> LassoProblem<'a> {
    pub fn new(design: &'a DenseMatrix, target: &'a [f64]) -> Result<Self> {
        if target.len() != design.rows() {
            return Err(HomotopyError::DimensionMismatch {
                expected: design.rows(),
                found: target.len(),
            });
        }
        if let Some(index) = design.columns().position(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(HomotopyError::ZeroColumn { index });
        }
        let correlations = design.tr_mul_vec(target)?;
        Ok(Self {
            design,
            target,
            correlations,
        })
    }

    pub fn design(&self) -> &DenseMatrix {
        self.design
    }

    pub fn target(&self) -> &[f64] {
        self.target
    }

    pub fn n_cols(&self) -> usize {
        self.design.cols()
    }

    /// `max_j |a_jᵀ y|` with its argmax (smallest index on ties).
    pub fn lambda_max(&self) -> (f64, usize) {
        let mut best = (0.0, 0);
        for (j, c) in self.correlations.iter().enumerate() {
            if c.abs() > best.0 {
                best = (c.abs(), j);
            }
        }
        best
    }

    /// Residual `y - A x` for a sparse `x` given as (column, value) pairs.
    pub fn residual(&self, columns: &[usize], values: &[f64]) -> Vec<f64> {
        let mut r = self.target.to_vec();
        for (&j, &v) in columns.iter().zip(values) {
            axpy(-v, self.design.col(j), &mut r);
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Insert,
    Delete,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Insert => "insert",
            EventKind::Delete => "delete",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub lambda: f64,
    pub kind: EventKind,
    pub index: usize,
}

/// Why a driver stopped advancing the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    TargetReached,
    LambdaReached,
    ReachedZero,
    RankLimit,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gamma: f64,
    kind: EventKind,
    index: usize,
    // insertion sign, or deletion position in the active ordering
    sign: f64,
    position: usize,
}

/// Current point on the homotopy path.
#[derive(Debug, Clone)]
pub struct LassoPathState {
    lambda: f64,
    lambda_max: f64,
    signs: Vec<f64>,
    coefficients: Vec<f64>,
    gram: GramCholesky,
    // Aᵀ (y - A_S x_S) over all columns
    correlations: Vec<f64>,
    excluded: Vec<usize>,
    event_log: Vec<PathEvent>,
    termination: Option<Termination>,
}

impl LassoPathState {
    /// Zero solution at `λ = λ_max`.
    pub fn new(p: &LassoProblem<'_>) -> Self {
        let (lambda_max, _) = p.lambda_max();
        Self {
            lambda: lambda_max,
            lambda_max,
            signs: Vec::new(),
            coefficients: Vec::new(),
            gram: GramCholesky::new(),
            correlations: p.correlations.clone(),
            excluded: Vec::new(),
            event_log: Vec::new(),
            termination: None,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Active columns in insertion order (after deletions).
    pub fn active(&self) -> &[usize] {
        self.gram.active()
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn gram(&self) -> &GramCholesky {
        &self.gram
    }

    /// `Aᵀ (y - A x)` at the current point, over every column.
    pub fn correlations(&self) -> &[f64] {
        &self.correlations
    }

    /// Columns dropped after they made the active Gram matrix singular.
    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn event_log(&self) -> &[PathEvent] {
        &self.event_log
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    /// Dense coefficient vector over all `n_cols` columns.
    pub fn full_coefficients(&self, n_cols: usize) -> Vec<f64> {
        let mut x = vec![0.0; n_cols];
        for (&j, &v) in self.active().iter().zip(&self.coefficients) {
            x[j] = v;
        }
        x
    }

    /// `½‖y - A x‖²` at the current point.
    pub fn data_fit(&self, p: &LassoProblem<'_>) -> f64 {
        let r = p.residual(self.active(), &self.coefficients);
        0.5 * dot(&r, &r)
    }

    /// Tolerance used by the KKT checks: `1e-8 · max(1, λ_max)`.
    pub fn kkt_tolerance(&self) -> f64 {
        1e-8 * self.lambda_max.max(1.0)
    }

    /// Largest violation of stationarity on the active set and of
    /// feasibility off it, from freshly computed correlations.
    pub fn kkt_violation(&self, p: &LassoProblem<'_>) -> f64 {
        let r = p.residual(self.active(), &self.coefficients);
        let c = p
            .design
            .tr_mul_vec(&r)
            .expect("residual length matches design");
        let mut worst: f64 = 0.0;
        let mut is_active = vec![false; p.n_cols()];
        for (&j, &s) in self.active().iter().zip(&self.signs) {
            is_active[j] = true;
            worst = worst.max((c[j] - self.lambda * s).abs());
        }
        for (j, cj) in c.iter().enumerate() {
            if !is_active[j] {
                worst = worst.max(cj.abs() - self.lambda);
            }
        }
        worst
    }

    /// Writes the event log, one `lambda kind index` line per event.
    pub fn write_trace<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.event_log {
            writeln!(out, "{:.16e} {} {}", e.lambda, e.kind, e.index)?;
        }
        Ok(())
    }

    fn tie_tolerance(&self) -> f64 {
        TIE_TOLERANCE * self.lambda_max.max(1.0)
    }

    fn usable_columns(&self, p: &LassoProblem<'_>) -> usize {
        (p.n_cols() - self.excluded.len()).min(p.design.rows())
    }

    /// Re-solves `x_S = G⁻¹ (A_Sᵀ y - λ s)` and refreshes the correlations.
    fn refresh(&mut self, p: &LassoProblem<'_>) -> Result<()> {
        let rhs: Vec<f64> = self
            .active()
            .iter()
            .zip(&self.signs)
            .map(|(&j, &s)| p.correlations[j] - self.lambda * s)
            .collect();
        self.coefficients = self.gram.solve(&rhs)?;
        let r = p.residual(self.gram.active(), &self.coefficients);
        self.correlations = p.design.tr_mul_vec(&r)?;
        Ok(())
    }

    fn next_candidate(&self, p: &LassoProblem<'_>) -> Result<Option<Candidate>> {
        let active = self.active();
        let direction = self.gram.solve(&self.signs)?;
        let mut u = vec![0.0; p.design.rows()];
        for (&j, &d) in active.iter().zip(&direction) {
            axpy(d, p.design.col(j), &mut u);
        }
        let last = self.event_log.last();
        let mut blocked = vec![false; p.n_cols()];
        for &j in active.iter().chain(&self.excluded) {
            blocked[j] = true;
        }
        // the atom that just changed status may not flip back at γ ≈ 0
        let tol = self.tie_tolerance();
        let just_deleted = last
            .filter(|e| e.kind == EventKind::Delete)
            .map(|e| e.index);
        let just_inserted = last
            .filter(|e| e.kind == EventKind::Insert)
            .map(|e| e.index);

        let lambda = self.lambda;
        let mut candidates = Vec::new();
        for (j, col) in p.design.columns().enumerate() {
            if blocked[j] {
                continue;
            }
            let c = self.correlations[j];
            let v = dot(col, &u);
            let mut best: Option<(f64, f64)> = None;
            for (sign, num, den) in [(1.0, lambda - c, 1.0 - v), (-1.0, lambda + c, 1.0 + v)] {
                if den > MIN_DENOMINATOR {
                    let g = (num / den).max(0.0);
                    if Some(j) == just_deleted && g <= tol {
                        continue;
                    }
                    if best.is_none_or(|(bg, _)| g < bg) {
                        best = Some((g, sign));
                    }
                }
            }
            if let Some((gamma, sign)) = best {
                candidates.push(Candidate {
                    gamma,
                    kind: EventKind::Insert,
                    index: j,
                    sign,
                    position: 0,
                });
            }
        }
        for (pos, ((&j, &x), (&s, &d))) in active
            .iter()
            .zip(&self.coefficients)
            .zip(self.signs.iter().zip(&direction))
            .enumerate()
        {
            if d * s >= 0.0 {
                continue;
            }
            let gamma = (-x / d).max(0.0);
            if Some(j) == just_inserted && gamma <= tol {
                continue;
            }
            candidates.push(Candidate {
                gamma,
                kind: EventKind::Delete,
                index: j,
                sign: s,
                position: pos,
            });
        }

        let Some(min_gamma) = candidates.iter().map(|c| c.gamma).reduce(f64::min) else {
            return Ok(None);
        };
        let chosen = candidates
            .into_iter()
            .filter(|c| c.gamma <= min_gamma + tol)
            .min_by_key(|c| (c.kind == EventKind::Delete, c.index));
        Ok(chosen)
    }

    /// Moves along the current segment to `lambda` without changing the
    /// active set.
    fn slide_to(&mut self, p: &LassoProblem<'_>, lambda: f64) -> Result<()> {
        self.lambda = lambda;
        self.refresh(p)
    }

    /// Advances to the next breakpoint above `floor`, or slides to `floor`
    /// (returning `None`) when the current segment reaches it first.
    fn advance(&mut self, p: &LassoProblem<'_>, floor: f64) -> Result<Option<PathEvent>> {
        loop {
            if self.active().len() >= p.design.rows() {
                return Err(HomotopyError::RankLimit);
            }
            let next = self.next_candidate(p)?;
            let next = next.filter(|c| self.lambda - c.gamma > floor);
            let Some(c) = next else {
                self.slide_to(p, floor)?;
                return Ok(None);
            };
            self.slide_to(p, self.lambda - c.gamma)?;
            match c.kind {
                EventKind::Insert => match self.gram.insert(p.design, c.index) {
                    Ok(()) => self.signs.push(c.sign),
                    Err(LinalgError::SingularGram { index }) => {
                        self.excluded.push(index);
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                },
                EventKind::Delete => {
                    self.gram.delete(c.position)?;
                    self.signs.remove(c.position);
                }
            }
            self.refresh(p)?;
            let event = PathEvent {
                lambda: self.lambda,
                kind: c.kind,
                index: c.index,
            };
            self.event_log.push(event);
            return Ok(Some(event));
        }
    }
}

/// Zero solution at `λ_max` for `p`.
pub fn start(p: &LassoProblem<'_>) -> LassoPathState {
    LassoPathState::new(p)
}

/// Advances `state` to the next breakpoint.
///
/// Returns [`HomotopyError::NoEvent`] after sliding the state to `λ = 0` when
/// the current segment reaches zero without a breakpoint, and
/// [`HomotopyError::RankLimit`] (state untouched) once `|S|` equals the number
/// of rows.
pub fn path_step(state: &mut LassoPathState, p: &LassoProblem<'_>) -> Result<PathEvent> {
    match state.advance(p, 0.0)? {
        Some(e) => Ok(e),
        None => Err(HomotopyError::NoEvent),
    }
}

/// Runs the path from `λ_max` until the active set first holds
/// `min(target, usable columns)` atoms, the path ends, or `max_steps` events
/// have been processed.
pub fn solve_until_support_size(
    p: &LassoProblem<'_>,
    target: usize,
    max_steps: usize,
) -> Result<LassoPathState> {
    let mut state = LassoPathState::new(p);
    let mut steps = 0;
    loop {
        if state.active().len() >= target.min(state.usable_columns(p)) {
            state.termination = Some(Termination::TargetReached);
            return Ok(state);
        }
        if steps == max_steps {
            return Err(HomotopyError::StepBudgetExceeded {
                budget: max_steps,
                state: Box::new(state),
            });
        }
        match path_step(&mut state, p) {
            Ok(_) => steps += 1,
            Err(HomotopyError::NoEvent) => {
                state.termination = Some(Termination::ReachedZero);
                return Ok(state);
            }
            Err(HomotopyError::RankLimit) => {
                state.termination = Some(Termination::RankLimit);
                return Ok(state);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Runs the path down to penalty `lambda`.
pub fn solve_for_lambda(
    p: &LassoProblem<'_>,
    lambda: f64,
    max_steps: usize,
) -> Result<LassoPathState> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(HomotopyError::InvalidLambda(lambda));
    }
    let mut state = LassoPathState::new(p);
    if lambda >= state.lambda_max {
        state.lambda = lambda;
        state.termination = Some(Termination::LambdaReached);
        return Ok(state);
    }
    let mut steps = 0;
    loop {
        if steps == max_steps {
            return Err(HomotopyError::StepBudgetExceeded {
                budget: max_steps,
                state: Box::new(state),
            });
        }
        match state.advance(p, lambda) {
            Ok(Some(_)) => steps += 1,
            Ok(None) => {
                state.termination = Some(Termination::LambdaReached);
                return Ok(state);
            }
            Err(HomotopyError::RankLimit) => {
                state.termination = Some(Termination::RankLimit);
                return Ok(state);
            }
            Err(e) => return Err(e),
        }
    }
}

pub fn default_budget_for_target(target: usize) -> usize {
    BUDGET_FACTOR * target
}

pub fn default_budget_for_lambda(n_cols: usize) -> usize {
    BUDGET_FACTOR * n_cols
}
