//! Forward greedy selection with pluggable atom scoring.
//!
//! Starting from an empty support, each iteration scores the remaining atoms,
//! appends the best one and re-fits the least-squares amplitudes on the
//! support. Three scoring rules are provided:
//!
//! * OMP: `|a_jᵀ r|` against the current residual.
//! * OLS: `‖A_{S∪{j}} A_{S∪{j}}⁺ y‖²`, the data energy explained by the
//!   support augmented with `j`.
//! * SLS: solve an ℓ1-penalized least-squares problem over all remaining
//!   atoms (support amplitudes left free) and score each atom by the
//!   magnitude of its coefficient.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::Dictionary;
use crate::homotopy::{self, HomotopyError, LassoPathState, LassoProblem, Termination};
use crate::linalg::{
    axpy, dot, norm2, DenseMatrix, GrowableFactorization, LinalgError, DEGENERATE_RELATIVE_NORM,
};

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("dictionary columns must be unit norm")]
    NotNormalized,
    #[error("observation has length {found}, dictionary has {expected} rows")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sparsity {k} exceeds min(n_obs, n_atoms) = {limit}")]
    SparsityTooLarge { k: usize, limit: usize },
    #[error("sls multiplier must be at least 1")]
    InvalidMultiplier,
    #[error("invalid support: {0}")]
    InvalidSupport(String),
    /// The projected target is orthogonal to every remaining atom.
    #[error("penalized subproblem has an identically zero solution")]
    EmptySolution,
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Homotopy(#[from] HomotopyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, GreedyError>;

/// Ordered set of selected atom indices within `0..universe`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    selected: Vec<usize>,
    universe: usize,
}

impl SupportSet {
    pub fn new(universe: usize) -> Self {
        Self {
            selected: Vec::new(),
            universe,
        }
    }

    pub fn from_indices(indices: &[usize], universe: usize) -> Result<Self> {
        let mut s = Self::new(universe);
        for &j in indices {
            s.insert(j)?;
        }
        Ok(s)
    }

    pub fn insert(&mut self, index: usize) -> Result<()> {
        if index >= self.universe {
            return Err(GreedyError::InvalidSupport(format!(
                "index {index} outside 0..{}",
                self.universe
            )));
        }
        if self.contains(index) {
            return Err(GreedyError::InvalidSupport(format!(
                "duplicate index {index}"
            )));
        }
        self.selected.push(index);
        Ok(())
    }

    pub fn contains(&self, index: usize) -> bool {
        self.selected.contains(&index)
    }

    pub fn indices(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    /// Remaining atoms, in increasing order.
    pub fn complement(&self) -> Vec<usize> {
        let mut mask = vec![false; self.universe];
        for &j in &self.selected {
            mask[j] = true;
        }
        (0..self.universe).filter(|&j| !mask[j]).collect()
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.selected.clone();
        v.sort_unstable();
        v
    }

    /// Equality as sets, ignoring selection order.
    pub fn same_set(&self, other: &SupportSet) -> bool {
        self.sorted() == other.sorted()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Omp,
    Ols,
    Sls,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Omp, Method::Ols, Method::Sls];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Omp => "omp",
            Method::Ols => "ols",
            Method::Sls => "sls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = GreedyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "omp" => Ok(Method::Omp),
            "ols" => Ok(Method::Ols),
            "sls" => Ok(Method::Sls),
            other => Err(GreedyError::UnknownMethod(other.to_string())),
        }
    }
}

pub const DEFAULT_SLS_MULTIPLIER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub method: Method,
    pub sparsity: usize,
    /// Target active-set size of each SLS subproblem is
    /// `sls_multiplier × (K - |support|)`.
    pub sls_multiplier: usize,
    /// Step budget per homotopy run; `None` means `10 × target`.
    pub homotopy_budget: Option<usize>,
    /// Keep the full score vector of every iteration in the trace.
    pub record_scores: bool,
    /// Keep the SLS homotopy state of every iteration in the trace.
    pub record_paths: bool,
}

impl GreedyConfig {
    pub fn new(method: Method, sparsity: usize) -> Self {
        Self {
            method,
            sparsity,
            sls_multiplier: DEFAULT_SLS_MULTIPLIER,
            homotopy_budget: None,
            record_scores: false,
            record_paths: false,
        }
    }

    pub fn with_scores(mut self) -> Self {
        self.record_scores = true;
        self
    }

    fn validate(&self, d: &Dictionary) -> Result<()> {
        let limit = d.n_obs().min(d.n_atoms());
        if self.sparsity > limit {
            return Err(GreedyError::SparsityTooLarge {
                k: self.sparsity,
                limit,
            });
        }
        if self.sls_multiplier == 0 {
            return Err(GreedyError::InvalidMultiplier);
        }
        Ok(())
    }
}

/// Projected data `P y` and the columns `P a_j` of every atom, where `P`
/// projects onto the orthogonal complement of the span of the support.
#[derive(Debug, Clone)]
struct Complement {
    target: Vec<f64>,
    columns: DenseMatrix,
}

impl Complement {
    fn new(d: &Dictionary, y: &[f64]) -> Self {
        Self {
            target: y.to_vec(),
            columns: d.matrix().clone(),
        }
    }

    fn from_factorization(d: &Dictionary, f: &GrowableFactorization<'_>, y: &[f64]) -> Self {
        let mut c = Self::new(d, y);
        for q in f.basis() {
            c.deflate(q);
        }
        c
    }

    // Removes the component along a new unit basis vector.
    fn deflate(&mut self, q: &[f64]) {
        let t = dot(q, &self.target);
        axpy(-t, q, &mut self.target);
        for j in 0..self.columns.cols() {
            let col = self.columns.col_mut(j);
            let c = dot(q, col);
            axpy(-c, q, col);
        }
    }

    /// `‖P a_j‖ < 1e-10 ‖a_j‖`.
    fn is_degenerate(&self, d: &Dictionary, j: usize) -> bool {
        norm2(self.columns.col(j)) < DEGENERATE_RELATIVE_NORM * norm2(d.atom(j))
    }
}

/// Remaining atoms projected onto the orthogonal complement of the support.
#[derive(Debug, Clone)]
pub struct ProjectedProblem {
    /// `P y`
    pub target: Vec<f64>,
    /// `P A` restricted to the usable remaining atoms.
    pub design: DenseMatrix,
    /// Column of `design` → original atom index.
    pub index_map: Vec<usize>,
    /// Remaining atoms dropped because they lie in the span of the support.
    pub pruned: Vec<usize>,
    /// Number of atoms in the dictionary.
    pub n_atoms: usize,
    /// Support size at construction.
    pub support_len: usize,
}

fn projected_problem(
    d: &Dictionary,
    support: &[usize],
    complement: &Complement,
) -> ProjectedProblem {
    let mut in_support = vec![false; d.n_atoms()];
    for &j in support {
        in_support[j] = true;
    }
    let mut index_map = Vec::new();
    let mut pruned = Vec::new();
    for j in (0..d.n_atoms()).filter(|&j| !in_support[j]) {
        if complement.is_degenerate(d, j) {
            pruned.push(j);
        } else {
            index_map.push(j);
        }
    }
    let rows = d.n_obs();
    let mut data = Vec::with_capacity(rows * index_map.len());
    for &j in &index_map {
        data.extend_from_slice(complement.columns.col(j));
    }
    let design = DenseMatrix::from_col_major(rows, index_map.len(), data)
        .expect("projected columns are finite");
    ProjectedProblem {
        target: complement.target.clone(),
        design,
        index_map,
        pruned,
        n_atoms: d.n_atoms(),
        support_len: support.len(),
    }
}

/// Builds the projected subproblem for the support held by `f`.
pub fn build_projected_problem(
    d: &Dictionary,
    f: &GrowableFactorization<'_>,
    y: &[f64],
) -> ProjectedProblem {
    let c = Complement::from_factorization(d, f, y);
    projected_problem(d, f.support(), &c)
}

/// OMP scores `|a_jᵀ r|`; atoms already in the support score `-∞`.
pub fn score_omp(d: &Dictionary, support: &SupportSet, residual: &[f64]) -> Vec<f64> {
    let mut scores: Vec<f64> = d
        .matrix()
        .columns()
        .map(|a| dot(a, residual).abs())
        .collect();
    for &j in support.indices() {
        scores[j] = f64::NEG_INFINITY;
    }
    scores
}

fn ols_scores(d: &Dictionary, support: &[usize], explained: f64, c: &Complement) -> Vec<f64> {
    let mut scores: Vec<f64> = (0..d.n_atoms())
        .map(|j| {
            if c.is_degenerate(d, j) {
                return f64::NEG_INFINITY;
            }
            let b = c.columns.col(j);
            let t = dot(b, &c.target);
            explained + t * t / dot(b, b)
        })
        .collect();
    for &j in support {
        scores[j] = f64::NEG_INFINITY;
    }
    scores
}

/// OLS scores `‖Qᵀ y‖² + (b_jᵀ ỹ)² / ‖b_j‖²` with `b_j = P a_j`, `ỹ = P y`.
/// Atoms in the support or its span score `-∞`.
pub fn score_ols(d: &Dictionary, f: &GrowableFactorization<'_>, y: &[f64]) -> Vec<f64> {
    let c = Complement::from_factorization(d, f, y);
    let explained = dot(y, y) - dot(&c.target, &c.target);
    ols_scores(d, f.support(), explained, &c)
}

/// SLS scores together with the homotopy state they were read from.
#[derive(Debug, Clone)]
pub struct SlsScores {
    pub scores: Vec<f64>,
    pub state: LassoPathState,
    /// Active-set size requested from the homotopy.
    pub target: usize,
    pub budget_exhausted: bool,
}

/// SLS scores: `|x̂_j|` from the penalized subproblem stopped when its
/// active set first reaches `min(multiplier × remaining, usable, n_obs - |S|)`
/// atoms. Inactive atoms score 0, pruned and support atoms `-∞`. When the
/// path stops at `λ_max` with all coefficients still zero, active atoms are
/// scored by the slope of the path just below it.
pub fn score_sls(
    pp: &ProjectedProblem,
    remaining_budget: usize,
    cfg: &GreedyConfig,
) -> Result<SlsScores> {
    if pp.design.cols() == 0 {
        return Err(GreedyError::EmptySolution);
    }
    let problem = LassoProblem::new(&pp.design, &pp.target)?;
    if problem.lambda_max().0 == 0.0 {
        return Err(GreedyError::EmptySolution);
    }
    let rows = pp.design.rows();
    let target = (cfg.sls_multiplier * remaining_budget)
        .min(pp.index_map.len())
        .min(rows.saturating_sub(pp.support_len));
    let budget = cfg
        .homotopy_budget
        .unwrap_or_else(|| homotopy::default_budget_for_target(target));
    let (state, budget_exhausted) =
        match homotopy::solve_until_support_size(&problem, target, budget) {
            Ok(s) => (s, false),
            Err(HomotopyError::StepBudgetExceeded { state, .. }) => (*state, true),
            Err(e) => return Err(e.into()),
        };
    let mut scores = vec![f64::NEG_INFINITY; pp.n_atoms];
    for &j in &pp.index_map {
        scores[j] = 0.0;
    }
    for (&col, &x) in state.active().iter().zip(state.coefficients()) {
        scores[pp.index_map[col]] = x.abs();
    }
    // Stopped at the first breakpoint: every active coefficient is still zero,
    // so rank the active atoms by the path slope just below it.
    if !state.active().is_empty() && state.coefficients().iter().all(|&x| x == 0.0) {
        let slope = state.gram().solve(state.signs())?;
        for (&col, &v) in state.active().iter().zip(&slope) {
            scores[pp.index_map[col]] = v.abs();
        }
    }
    Ok(SlsScores {
        scores,
        state,
        target,
        budget_exhausted,
    })
}

/// Summary of the homotopy run behind one SLS selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopySummary {
    pub target: usize,
    pub active: usize,
    pub lambda: f64,
    pub lambda_max: f64,
    pub events: usize,
    pub budget_exhausted: bool,
    pub reached_zero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub selected: usize,
    pub score: f64,
    /// Candidates skipped because they were in the span of the support.
    pub skipped: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homotopy: Option<HomotopySummary>,
    /// SLS homotopy state, when paths are recorded.
    #[serde(skip)]
    pub path: Option<LassoPathState>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub support: SupportSet,
    /// Least-squares amplitudes on `support`, in selection order.
    pub amplitudes: Vec<f64>,
    pub residual: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    /// Fewer than `K` atoms could be selected.
    pub early_termination: bool,
}

impl GreedyResult {
    /// Dense coefficient vector over all atoms.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.support.universe()];
        for (&j, &v) in self.support.indices().iter().zip(&self.amplitudes) {
            x[j] = v;
        }
        x
    }

    pub fn residual_norm_sq(&self) -> f64 {
        dot(&self.residual, &self.residual)
    }
}

/// Candidate atoms scoring above `floor`, best first, smallest index on ties.
fn ranked(scores: &[f64], floor: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] > floor).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Runs the forward selection configured by `cfg` on `y ≈ A x`.
///
/// Degenerate picks (atoms in the span of the support) fall through to the
/// next best score. The run stops early, with `early_termination` set, when no
/// atom has a positive score or the SLS subproblem has a zero solution.
pub fn run_forward_selection(
    d: &Dictionary,
    y: &[f64],
    cfg: &GreedyConfig,
) -> Result<GreedyResult> {
    if !d.is_normalized() {
        return Err(GreedyError::NotNormalized);
    }
    if y.len() != d.n_obs() {
        return Err(GreedyError::DimensionMismatch {
            expected: d.n_obs(),
            found: y.len(),
        });
    }
    cfg.validate(d)?;

    let mut f = GrowableFactorization::new(d.matrix());
    let mut support = SupportSet::new(d.n_atoms());
    let mut amplitudes = Vec::new();
    let mut residual = y.to_vec();
    let mut trace = Vec::with_capacity(cfg.sparsity);
    let mut early_termination = false;
    // OMP only needs the residual; the other rules keep P A up to date.
    let mut complement = (cfg.method != Method::Omp).then(|| Complement::new(d, y));
    let y_energy = dot(y, y);

    while support.len() < cfg.sparsity {
        let started = Instant::now();
        let mut homotopy_summary = None;
        let mut path = None;
        // OLS scores include the energy already explained; only the gain ranks.
        let mut floor = 0.0;
        let scores = match cfg.method {
            Method::Omp => score_omp(d, &support, &residual),
            Method::Ols => {
                let c = complement.as_ref().expect("complement kept for OLS");
                floor = y_energy - dot(&c.target, &c.target);
                ols_scores(d, support.indices(), floor, c)
            }
            Method::Sls => {
                let c = complement.as_ref().expect("complement kept for SLS");
                let pp = projected_problem(d, support.indices(), c);
                match score_sls(&pp, cfg.sparsity - support.len(), cfg) {
                    Ok(s) => {
                        homotopy_summary = Some(HomotopySummary {
                            target: s.target,
                            active: s.state.active().len(),
                            lambda: s.state.lambda(),
                            lambda_max: s.state.lambda_max(),
                            events: s.state.event_log().len(),
                            budget_exhausted: s.budget_exhausted,
                            reached_zero: s.state.termination() == Some(Termination::ReachedZero),
                        });
                        if cfg.record_paths {
                            path = Some(s.state);
                        }
                        s.scores
                    }
                    Err(GreedyError::EmptySolution) => {
                        early_termination = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        };

        let mut skipped = Vec::new();
        let mut chosen = None;
        for j in ranked(&scores, floor) {
            match f.append(j) {
                Ok(()) => {
                    chosen = Some(j);
                    break;
                }
                Err(LinalgError::DegenerateAtom { .. }) => skipped.push(j),
                Err(e) => return Err(e.into()),
            }
        }
        let Some(j) = chosen else {
            early_termination = true;
            break;
        };
        support.insert(j)?;
        if let Some(c) = complement.as_mut() {
            c.deflate(f.basis().last().expect("basis grew"));
        }
        let (x, r) = f.least_squares(y)?;
        amplitudes = x;
        residual = r;
        trace.push(IterationRecord {
            selected: j,
            score: scores[j],
            skipped,
            scores: cfg.record_scores.then_some(scores),
            homotopy: homotopy_summary,
            path,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }

    Ok(GreedyResult {
        support,
        amplitudes,
        residual,
        trace,
        early_termination,
    })
}
