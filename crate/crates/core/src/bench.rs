//! Sparse-deconvolution benchmark: problem generation, metrics, the BPDN
//! baseline, an exhaustive small-instance oracle and campaign orchestration.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::{
    build_convolution_dictionary, default_convolution_spec, mutual_coherence, ConvolutionSpec,
    Dictionary, DictionaryError,
};
use crate::greedy::{
    run_forward_selection, score_omp, GreedyConfig, GreedyError, GreedyResult, IterationRecord,
    Method, SupportSet, DEFAULT_SLS_MULTIPLIER,
};
use crate::homotopy::{self, HomotopyError, LassoPathState, LassoProblem, Termination};
use crate::linalg::{dot, least_squares_on_support, LinalgError};

/// Amplitude magnitudes are drawn uniformly from this interval.
pub const AMPLITUDE_RANGE: (f64, f64) = (0.2, 1.0);

/// Largest number of supports the exhaustive oracle will enumerate.
pub const ORACLE_MAX_SUPPORTS: u128 = 1_000_000;

pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_SNR_DB: f64 = 20.0;
pub const DEFAULT_K_GRID: [usize; 5] = [5, 10, 20, 30, 40];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot place {k} spikes with minimum gap {min_gap} among {n_atoms} positions")]
    InfeasiblePlacement {
        k: usize,
        n_atoms: usize,
        min_gap: usize,
    },
    #[error("cannot set a finite SNR on a zero signal")]
    ZeroSignal,
    #[error("no two-spike separation in 1..={max_separation} defeats first-iteration correlation")]
    NotFound { max_separation: usize },
    #[error("exhaustive search over C({n}, {k}) supports exceeds the limit")]
    TooLarge { n: usize, k: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Greedy(#[from] GreedyError),
    #[error(transparent)]
    Homotopy(#[from] HomotopyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// One benchmark trial: ground truth, noise and data.
#[derive(Debug, Clone)]
pub struct DeconvolutionProblem {
    pub dictionary: Arc<Dictionary>,
    pub true_support: SupportSet,
    /// Ground-truth coefficients over the full atom grid.
    pub true_amplitudes: Vec<f64>,
    pub clean_data: Vec<f64>,
    pub noise: Vec<f64>,
    pub observed: Vec<f64>,
    pub snr_db: f64,
    pub seed: u64,
}

/// Draws `k` spike positions uniformly among placements whose pairwise
/// distance is at least `min_gap`, with amplitudes `±U[0.2, 1]`.
pub fn generate_sparse_signal<R: Rng + ?Sized>(
    n_atoms: usize,
    k: usize,
    rng: &mut R,
    min_gap: usize,
) -> Result<(SupportSet, Vec<f64>)> {
    let gap = min_gap.max(1);
    // Sorted placements with gaps ≥ g map one-to-one onto k-subsets of a
    // range shortened by (k-1)(g-1).
    let shrink = k.saturating_sub(1) * (gap - 1);
    if k > n_atoms || shrink > n_atoms - k {
        return Err(BenchError::InfeasiblePlacement {
            k,
            n_atoms,
            min_gap,
        });
    }
    let mut picks = index::sample(rng, n_atoms - shrink, k).into_vec();
    picks.sort_unstable();
    let positions: Vec<usize> = picks
        .iter()
        .enumerate()
        .map(|(i, &p)| p + i * (gap - 1))
        .collect();
    let mut x = vec![0.0; n_atoms];
    for &p in &positions {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x[p] = sign * rng.random_range(AMPLITUDE_RANGE.0..=AMPLITUDE_RANGE.1);
    }
    let support = SupportSet::from_indices(&positions, n_atoms).expect("distinct positions");
    Ok((support, x))
}

/// White Gaussian noise scaled so that `10 log10(‖clean‖² / ‖ε‖²) = snr_db`.
/// An infinite SNR yields zero noise.
pub fn add_noise_snr<R: Rng + ?Sized>(clean: &[f64], snr_db: f64, rng: &mut R) -> Result<Vec<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(vec![0.0; clean.len()]);
    }
    if !snr_db.is_finite() {
        return Err(BenchError::Config(format!("invalid SNR {snr_db}")));
    }
    let signal = dot(clean, clean);
    if signal == 0.0 {
        return Err(BenchError::ZeroSignal);
    }
    let mut noise: Vec<f64>;
    loop {
        noise = (0..clean.len())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        if dot(&noise, &noise) > 0.0 {
            break;
        }
    }
    let wanted = signal / 10f64.powf(snr_db / 10.0);
    let scale = (wanted / dot(&noise, &noise)).sqrt();
    noise.iter_mut().for_each(|v| *v *= scale);
    Ok(noise)
}

/// Achieved `10 log10(‖clean‖² / ‖noise‖²)`.
pub fn snr_db(clean: &[f64], noise: &[f64]) -> f64 {
    10.0 * (dot(clean, clean) / dot(noise, noise)).log10()
}

/// Generates one trial from a dedicated seed.
pub fn generate_problem(
    dictionary: Arc<Dictionary>,
    k: usize,
    snr_db: f64,
    min_gap: usize,
    seed: u64,
) -> Result<DeconvolutionProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (true_support, true_amplitudes) =
        generate_sparse_signal(dictionary.n_atoms(), k, &mut rng, min_gap)?;
    let clean_data = dictionary.matrix().mul_vec(&true_amplitudes)?;
    let noise = if k == 0 {
        vec![0.0; clean_data.len()]
    } else {
        add_noise_snr(&clean_data, snr_db, &mut rng)?
    };
    let observed = clean_data.iter().zip(&noise).map(|(c, e)| c + e).collect();
    Ok(DeconvolutionProblem {
        dictionary,
        true_support,
        true_amplitudes,
        clean_data,
        noise,
        observed,
        snr_db,
        seed,
    })
}

/// Two equal spikes whose data make the first correlation peak fall strictly
/// between them.
#[derive(Debug, Clone)]
pub struct Fig1Instance {
    pub problem: DeconvolutionProblem,
    pub separation: usize,
    /// First OMP/OLS pick: the argmax of `|a_jᵀ y|`.
    pub correlation_argmax: usize,
}

/// Searches spike separations `1..=len(h)` around a random position for a
/// noise-free two-spike instance whose correlation peak lies strictly between
/// the spikes and on neither of them. The largest such separation is
/// returned, so the two echoes are as resolvable as the property allows.
pub fn construct_fig1_instance<R: Rng + ?Sized>(
    spec: &ConvolutionSpec,
    rng: &mut R,
) -> Result<Fig1Instance> {
    let built = build_convolution_dictionary(spec)?;
    let dictionary = Arc::new(built.dictionary);
    let n = dictionary.n_atoms();
    let max_separation = spec.impulse_response.len().max(1);
    if n < 3 {
        return Err(BenchError::NotFound { max_separation });
    }
    let max_sep = max_separation.min(n - 1);
    // keep both spikes away from the edges
    let margin = spec.impulse_response.len().min((n - 1 - max_sep) / 2);
    let hi = n - 1 - max_sep - margin;
    let first = if hi > margin {
        rng.random_range(margin..=hi)
    } else {
        (n - 1 - max_sep) / 2
    };
    for separation in (1..=max_sep).rev() {
        let second = first + separation;
        let y: Vec<f64> = dictionary
            .atom(first)
            .iter()
            .zip(dictionary.atom(second))
            .map(|(a, b)| a + b)
            .collect();
        let scores = score_omp(&dictionary, &SupportSet::new(n), &y);
        let peak = argmax(&scores);
        if first < peak && peak < second {
            let mut x = vec![0.0; n];
            x[first] = 1.0;
            x[second] = 1.0;
            let problem = DeconvolutionProblem {
                true_support: SupportSet::from_indices(&[first, second], n)?,
                true_amplitudes: x,
                noise: vec![0.0; y.len()],
                observed: y.clone(),
                clean_data: y,
                snr_db: f64::INFINITY,
                seed: 0,
                dictionary,
            };
            return Ok(Fig1Instance {
                problem,
                separation,
                correlation_argmax: peak,
            });
        }
    }
    Err(BenchError::NotFound {
        max_separation: max_sep,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = j;
        }
    }
    best
}

/// Globally optimal `K`-sparse least-squares fit.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub support: SupportSet,
    pub amplitudes: Vec<f64>,
    pub residual_norm_sq: f64,
}

impl OracleSolution {
    /// `½‖y - A x‖²`
    pub fn objective(&self) -> f64 {
        0.5 * self.residual_norm_sq
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Enumerates every support of size at most `k` and keeps the one with the
/// smallest residual (first in lexicographic order on ties). Rank-deficient
/// supports are skipped.
pub fn exhaustive_oracle(d: &Dictionary, y: &[f64], k: usize) -> Result<OracleSolution> {
    let n = d.n_atoms();
    if k > n || binomial(n, k) > ORACLE_MAX_SUPPORTS {
        return Err(BenchError::TooLarge { n, k });
    }
    let mut best = OracleSolution {
        support: SupportSet::new(n),
        amplitudes: Vec::new(),
        residual_norm_sq: dot(y, y),
    };
    for size in 1..=k {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            match least_squares_on_support(d.matrix(), &combo, y) {
                Ok((x, r)) => {
                    let err = dot(&r, &r);
                    if err < best.residual_norm_sq {
                        best = OracleSolution {
                            support: SupportSet::from_indices(&combo, n)?,
                            amplitudes: x,
                            residual_norm_sq: err,
                        };
                    }
                }
                Err(LinalgError::RankDeficient) => {}
                Err(e) => return Err(e.into()),
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
    }
    Ok(best)
}

// Advances to the next k-subset of 0..n in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let Some(i) = (0..k).rev().find(|&i| combo[i] < n - k + i) else {
        return false;
    };
    combo[i] += 1;
    for j in (i + 1)..k {
        combo[j] = combo[j - 1] + 1;
    }
    true
}

/// ℓ1 baseline: the homotopy on the full dictionary stopped when `K` atoms are
/// active, followed by least squares on that support.
#[derive(Debug, Clone)]
pub struct BpdnOutput {
    pub result: GreedyResult,
    pub path: LassoPathState,
}

pub fn bpdn_baseline(d: &Dictionary, y: &[f64], k: usize) -> Result<BpdnOutput> {
    if k == 0 {
        return Err(BenchError::Config("bpdn needs K >= 1".into()));
    }
    let started = Instant::now();
    let problem = LassoProblem::new(d.matrix(), y)?;
    let (path, budget_exhausted) = match homotopy::solve_until_support_size(
        &problem,
        k,
        homotopy::default_budget_for_target(k),
    ) {
        Ok(s) => (s, false),
        Err(HomotopyError::StepBudgetExceeded { state, .. }) => (*state, true),
        Err(e) => return Err(e.into()),
    };
    let active = path.active().to_vec();
    let (amplitudes, residual) = least_squares_on_support(d.matrix(), &active, y)?;
    let early_termination = budget_exhausted
        || active.len() < k
        || path.termination() != Some(Termination::TargetReached);
    let record = IterationRecord {
        selected: active.last().copied().unwrap_or(0),
        score: path.lambda(),
        skipped: Vec::new(),
        scores: None,
        homotopy: None,
        path: None,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(BpdnOutput {
        result: GreedyResult {
            support: SupportSet::from_indices(&active, d.n_atoms())?,
            amplitudes,
            residual,
            trace: vec![record],
            early_termination,
        },
        path,
    })
}

/// Solvers the campaign knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSpec {
    Omp,
    Ols,
    Sls,
    Bpdn,
}

impl MethodSpec {
    pub const ALL: [MethodSpec; 4] = [
        MethodSpec::Omp,
        MethodSpec::Ols,
        MethodSpec::Sls,
        MethodSpec::Bpdn,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::Omp => "omp",
            MethodSpec::Ols => "ols",
            MethodSpec::Sls => "sls",
            MethodSpec::Bpdn => "bpdn",
        }
    }
}

impl FromStr for MethodSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "omp" => Ok(MethodSpec::Omp),
            "ols" => Ok(MethodSpec::Ols),
            "sls" => Ok(MethodSpec::Sls),
            "bpdn" => Ok(MethodSpec::Bpdn),
            other => Err(BenchError::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Solution of one solver on one instance, plus any homotopy paths it ran.
#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub result: GreedyResult,
    pub paths: Vec<LassoPathState>,
}

/// A `K`-sparse solver pluggable into campaigns.
pub trait SparseSolver: Send + Sync {
    fn label(&self) -> String;
    fn solve(&self, d: &Dictionary, y: &[f64], k: usize, keep_paths: bool) -> Result<SolverOutput>;
}

/// Built-in solvers.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinSolver {
    pub method: MethodSpec,
    pub sls_multiplier: usize,
}

impl SparseSolver for BuiltinSolver {
    fn label(&self) -> String {
        self.method.label().to_string()
    }

    fn solve(&self, d: &Dictionary, y: &[f64], k: usize, keep_paths: bool) -> Result<SolverOutput> {
        let method = match self.method {
            MethodSpec::Bpdn => {
                let out = bpdn_baseline(d, y, k)?;
                let paths = if keep_paths {
                    vec![out.path]
                } else {
                    Vec::new()
                };
                return Ok(SolverOutput {
                    result: out.result,
                    paths,
                });
            }
            MethodSpec::Omp => Method::Omp,
            MethodSpec::Ols => Method::Ols,
            MethodSpec::Sls => Method::Sls,
        };
        let mut cfg = GreedyConfig::new(method, k);
        cfg.sls_multiplier = self.sls_multiplier;
        cfg.record_paths = keep_paths;
        let mut result = run_forward_selection(d, y, &cfg)?;
        let paths = result
            .trace
            .iter_mut()
            .filter_map(|r| r.path.take())
            .collect();
        Ok(SolverOutput { result, paths })
    }
}

/// Campaign definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub dictionary: DictionarySource,
    pub k_grid: Vec<usize>,
    pub trials: usize,
    pub snr_db: f64,
    pub methods: Vec<MethodSpec>,
    pub master_seed: u64,
    pub sls_multiplier: usize,
    pub min_gap: usize,
}

/// Serializable description of the dictionary a campaign runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DictionarySource {
    Convolution {
        impulse_response: Vec<f64>,
        signal_length: usize,
        upsampling_factor: usize,
        observation_length: usize,
    },
    /// Loaded from a file; only the source is recorded.
    External { source: String },
}

impl From<&ConvolutionSpec> for DictionarySource {
    fn from(s: &ConvolutionSpec) -> Self {
        DictionarySource::Convolution {
            impulse_response: s.impulse_response.clone(),
            signal_length: s.signal_length,
            upsampling_factor: s.upsampling_factor,
            observation_length: s.observation_length,
        }
    }
}

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            dictionary: (&default_convolution_spec()).into(),
            k_grid: DEFAULT_K_GRID.to_vec(),
            trials: DEFAULT_TRIALS,
            snr_db: DEFAULT_SNR_DB,
            methods: MethodSpec::ALL.to_vec(),
            master_seed: 0,
            sls_multiplier: DEFAULT_SLS_MULTIPLIER,
            min_gap: 1,
        }
    }
}

impl CampaignSpec {
    pub fn build_dictionary(&self) -> Result<Dictionary> {
        match &self.dictionary {
            DictionarySource::Convolution {
                impulse_response,
                signal_length,
                upsampling_factor,
                observation_length,
            } => {
                let spec = ConvolutionSpec {
                    impulse_response: impulse_response.clone(),
                    signal_length: *signal_length,
                    upsampling_factor: *upsampling_factor,
                    observation_length: *observation_length,
                };
                Ok(build_convolution_dictionary(&spec)?.dictionary)
            }
            DictionarySource::External { source } => Err(BenchError::Config(format!(
                "dictionary {source} must be supplied explicitly"
            ))),
        }
    }

    fn validate(&self, d: &Dictionary) -> Result<()> {
        if self.trials == 0 {
            return Err(BenchError::Config("trials must be at least 1".into()));
        }
        if self.k_grid.is_empty() {
            return Err(BenchError::Config("K grid is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(BenchError::Config("no methods selected".into()));
        }
        if self.sls_multiplier == 0 {
            return Err(BenchError::Config(
                "sls multiplier must be at least 1".into(),
            ));
        }
        let limit = d.n_obs().min(d.n_atoms());
        if let Some(&k) = self.k_grid.iter().find(|&&k| k > limit) {
            return Err(BenchError::Config(format!(
                "K = {k} exceeds min(n_obs, n_atoms) = {limit}"
            )));
        }
        Ok(())
    }

    pub fn solvers(&self) -> Vec<Box<dyn SparseSolver>> {
        self.methods
            .iter()
            .map(|&method| {
                Box::new(BuiltinSolver {
                    method,
                    sls_multiplier: self.sls_multiplier,
                }) as Box<dyn SparseSolver>
            })
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SEED_SCHEME: &str =
    "child = splitmix64(splitmix64(splitmix64(master) ^ K) ^ trial); trial rng = ChaCha8(child)";

/// Per-trial seed, independent of execution order.
pub fn child_seed(master: u64, k: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ k as u64) ^ trial as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub method: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    /// `‖x̂ - x*‖²` over the full atom grid.
    pub coeff_error: f64,
    /// `‖y - A x̂‖²`
    pub residual_error: f64,
    pub exact_recovery: bool,
    pub wall_time_s: f64,
    pub early_term: bool,
    /// The solver returned an error; the trial counts as a zero estimate.
    pub failed: bool,
}

/// Scores a solution against the ground truth.
pub fn trial_metrics(
    method: &str,
    problem: &DeconvolutionProblem,
    k: usize,
    trial: usize,
    result: &GreedyResult,
    wall_time_s: f64,
) -> TrialMetrics {
    let x = result.coefficients();
    let coeff_error = x
        .iter()
        .zip(&problem.true_amplitudes)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let fit = problem
        .dictionary
        .matrix()
        .mul_vec(&x)
        .expect("coefficient length matches dictionary");
    let residual_error = problem
        .observed
        .iter()
        .zip(&fit)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    TrialMetrics {
        method: method.to_string(),
        k,
        trial,
        seed: problem.seed,
        coeff_error,
        residual_error,
        exact_recovery: !result.early_termination && result.support.same_set(&problem.true_support),
        wall_time_s,
        early_term: result.early_termination,
        failed: false,
    }
}

fn failed_metrics(
    method: &str,
    problem: &DeconvolutionProblem,
    k: usize,
    trial: usize,
) -> TrialMetrics {
    TrialMetrics {
        method: method.to_string(),
        k,
        trial,
        seed: problem.seed,
        coeff_error: dot(&problem.true_amplitudes, &problem.true_amplitudes),
        residual_error: dot(&problem.observed, &problem.observed),
        exact_recovery: false,
        wall_time_s: 0.0,
        early_term: true,
        failed: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub trials: usize,
    pub mean_coeff_error: f64,
    pub mean_residual_error: f64,
    pub recovery_rate: f64,
    pub mean_time_s: f64,
    pub early_terminations: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportHeader {
    pub spec: CampaignSpec,
    pub n_obs: usize,
    pub n_atoms: usize,
    pub mutual_coherence: f64,
    pub seed_scheme: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub header: ReportHeader,
    pub trials: Vec<TrialMetrics>,
    pub aggregates: Vec<Aggregate>,
}

/// Extra knobs that do not change results.
#[derive(Debug, Clone, Default)]
pub struct CampaignOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Directory receiving one homotopy trace file per (method, K, trial).
    pub trace_dir: Option<PathBuf>,
}

/// Runs `spec` on its own convolution dictionary.
pub fn run_campaign(spec: &CampaignSpec) -> Result<BenchmarkReport> {
    let d = spec.build_dictionary()?;
    run_campaign_on(
        Arc::new(d),
        spec,
        &spec.solvers(),
        &CampaignOptions::default(),
    )
}

/// Runs every (K, trial) work item on `dictionary` with the given solvers.
/// The report depends only on the inputs, not on scheduling.
pub fn run_campaign_on(
    dictionary: Arc<Dictionary>,
    spec: &CampaignSpec,
    solvers: &[Box<dyn SparseSolver>],
    options: &CampaignOptions,
) -> Result<BenchmarkReport> {
    spec.validate(&dictionary)?;
    if let Some(dir) = &options.trace_dir {
        fs::create_dir_all(dir)?;
    }
    let items: Vec<(usize, usize)> = spec
        .k_grid
        .iter()
        .flat_map(|&k| (0..spec.trials).map(move |t| (k, t)))
        .collect();

    let work = || -> Result<Vec<Vec<TrialMetrics>>> {
        items
            .par_iter()
            .map(|&(k, trial)| run_trial(&dictionary, spec, solvers, options, k, trial))
            .collect()
    };
    let per_item = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let trials: Vec<TrialMetrics> = per_item.into_iter().flatten().collect();
    let aggregates = aggregate(&trials, spec, solvers);
    let mutual_coherence = if dictionary.n_atoms() >= 2 {
        mutual_coherence(&dictionary)?
    } else {
        0.0
    };
    Ok(BenchmarkReport {
        header: ReportHeader {
            spec: spec.clone(),
            n_obs: dictionary.n_obs(),
            n_atoms: dictionary.n_atoms(),
            mutual_coherence,
            seed_scheme: SEED_SCHEME.to_string(),
        },
        trials,
        aggregates,
    })
}

fn run_trial(
    dictionary: &Arc<Dictionary>,
    spec: &CampaignSpec,
    solvers: &[Box<dyn SparseSolver>],
    options: &CampaignOptions,
    k: usize,
    trial: usize,
) -> Result<Vec<TrialMetrics>> {
    let seed = child_seed(spec.master_seed, k, trial);
    let problem = generate_problem(dictionary.clone(), k, spec.snr_db, spec.min_gap, seed)?;
    let keep_paths = options.trace_dir.is_some();
    let mut out = Vec::with_capacity(solvers.len());
    for solver in solvers {
        let label = solver.label();
        let started = Instant::now();
        match solver.solve(dictionary, &problem.observed, k, keep_paths) {
            Ok(sol) => {
                let elapsed = started.elapsed().as_secs_f64();
                if let Some(dir) = &options.trace_dir {
                    let path = dir.join(format!("{label}_K{k}_trial{trial}.trace"));
                    write_paths(&sol.paths, fs::File::create(path)?)?;
                }
                out.push(trial_metrics(
                    &label,
                    &problem,
                    k,
                    trial,
                    &sol.result,
                    elapsed,
                ));
            }
            Err(e) => {
                log_failure(&label, k, trial, &e);
                out.push(failed_metrics(&label, &problem, k, trial));
            }
        }
    }
    Ok(out)
}

fn log_failure(label: &str, k: usize, trial: usize, e: &BenchError) {
    eprintln!("warning: {label} failed on K={k} trial={trial}: {e}");
}

/// Writes homotopy event logs, one block per path headed by `# path i`.
pub fn write_paths<W: Write>(paths: &[LassoPathState], mut out: W) -> io::Result<()> {
    for (i, p) in paths.iter().enumerate() {
        writeln!(out, "# path {i}")?;
        p.write_trace(&mut out)?;
    }
    out.flush()
}

fn aggregate(
    trials: &[TrialMetrics],
    spec: &CampaignSpec,
    solvers: &[Box<dyn SparseSolver>],
) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for solver in solvers {
        let label = solver.label();
        for &k in &spec.k_grid {
            let rows: Vec<&TrialMetrics> = trials
                .iter()
                .filter(|t| t.method == label && t.k == k)
                .collect();
            let n = rows.len().max(1) as f64;
            let mean = |f: fn(&TrialMetrics) -> f64| rows.iter().map(|t| f(t)).sum::<f64>() / n;
            out.push(Aggregate {
                method: label.clone(),
                k,
                trials: rows.len(),
                mean_coeff_error: mean(|t| t.coeff_error),
                mean_residual_error: mean(|t| t.residual_error),
                recovery_rate: mean(|t| if t.exact_recovery { 1.0 } else { 0.0 }),
                mean_time_s: mean(|t| t.wall_time_s),
                early_terminations: rows.iter().filter(|t| t.early_term).count(),
                failures: rows.iter().filter(|t| t.failed).count(),
            });
        }
    }
    out
}

pub const TRIALS_CSV_HEADER: &str =
    "method,K,trial,seed,coeff_error,residual_error,exact_recovery,wall_time_s,early_term";
pub const AGGREGATE_CSV_HEADER: &str = "method,K,mean_coeff_error,recovery_rate,mean_time_s";

impl BenchmarkReport {
    /// Per-trial CSV.
    pub fn trials_csv(&self) -> String {
        let mut s = String::from(TRIALS_CSV_HEADER);
        s.push('\n');
        for t in &self.trials {
            let _ = writeln!(
                s,
                "{},{},{},{},{:e},{:e},{},{:e},{}",
                t.method,
                t.k,
                t.trial,
                t.seed,
                t.coeff_error,
                t.residual_error,
                t.exact_recovery,
                t.wall_time_s,
                t.early_term
            );
        }
        s
    }

    /// Plot-ready per-(method, K) CSV.
    pub fn aggregate_csv(&self) -> String {
        let mut s = String::from(AGGREGATE_CSV_HEADER);
        s.push('\n');
        for a in &self.aggregates {
            let _ = writeln!(
                s,
                "{},{},{:e},{},{:e}",
                a.method, a.k, a.mean_coeff_error, a.recovery_rate, a.mean_time_s
            );
        }
        s
    }

    /// JSON summary: header and aggregates.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            header: &'a ReportHeader,
            aggregates: &'a [Aggregate],
        }
        serde_json::to_string_pretty(&Summary {
            header: &self.header,
            aggregates: &self.aggregates,
        })
        .expect("report is serializable")
    }

    pub fn aggregate_for(&self, method: &str, k: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.k == k)
    }
}

/// Scores and results of all methods on a two-spike instance.
#[derive(Debug, Clone, Serialize)]
pub struct Fig1Report {
    pub separation: usize,
    pub true_support: Vec<usize>,
    pub correlation_argmax: usize,
    pub observed: Vec<f64>,
    pub methods: Vec<Fig1Method>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig1Method {
    pub method: String,
    /// First-iteration score vector (empty for bpdn).
    pub first_scores: Vec<f64>,
    pub support: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub exact_recovery: bool,
}

/// Runs OMP, OLS and SLS with `K = 2` on a two-spike instance.
pub fn fig1_report(instance: &Fig1Instance) -> Result<Fig1Report> {
    let p = &instance.problem;
    let mut methods = Vec::new();
    for method in Method::ALL {
        let r = run_forward_selection(
            &p.dictionary,
            &p.observed,
            &GreedyConfig::new(method, 2).with_scores(),
        )?;
        let first_scores = r
            .trace
            .first()
            .and_then(|t| t.scores.clone())
            .unwrap_or_default()
            .into_iter()
            .map(|s| if s.is_finite() { s } else { 0.0 })
            .collect();
        methods.push(Fig1Method {
            method: method.label().to_string(),
            first_scores,
            exact_recovery: r.support.same_set(&p.true_support),
            support: r.support.indices().to_vec(),
            amplitudes: r.amplitudes,
        });
    }
    Ok(Fig1Report {
        separation: instance.separation,
        true_support: p.true_support.indices().to_vec(),
        correlation_argmax: instance.correlation_argmax,
        observed: p.observed.clone(),
        methods,
    })
}
