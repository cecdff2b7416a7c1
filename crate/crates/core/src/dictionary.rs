//! Dictionaries: column normalization, mutual coherence, the up-sampled
//! convolution dictionary used by the deconvolution benchmark, and a plain
//! text file format.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::linalg::{dot, norm2, DenseMatrix, LinalgError};

/// Columns with a norm below this are treated as zero.
const ZERO_COLUMN_NORM: f64 = 1e-300;

/// Tolerance on `| ‖a_j‖ - 1 |` for a dictionary to count as normalized.
pub const UNIT_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },
    #[error("dictionary columns are not unit norm")]
    NotNormalized,
    #[error("mutual coherence needs at least two atoms")]
    TooFewAtoms,
    #[error("invalid convolution spec: {0}")]
    InvalidSpec(String),
    #[error("malformed dictionary file: {0}")]
    Parse(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DictionaryError>;

/// Observation matrix `A` (`n_obs × n_atoms`) whose columns are the atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    matrix: DenseMatrix,
    normalized: bool,
}

impl Dictionary {
    /// Wraps a matrix; the normalized flag is set when every column already
    /// has unit norm.
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if matrix.cols() == 0 {
            return Err(DictionaryError::InvalidSpec(
                "dictionary needs at least one atom".into(),
            ));
        }
        let normalized = matrix
            .columns()
            .all(|c| (norm2(c) - 1.0).abs() <= UNIT_NORM_TOL);
        Ok(Self { matrix, normalized })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DenseMatrix::identity(n),
            normalized: true,
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn n_obs(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_atoms(&self) -> usize {
        self.matrix.cols()
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        self.matrix.col(j)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Writes the dictionary as `rows cols` followed by one line per row of
    /// whitespace-separated values in 17-significant-digit scientific notation.
    pub fn write_text<W: Write>(&self, out: W) -> Result<()> {
        write_matrix_text(&self.matrix, out)
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        Self::new(read_matrix_text(input)?)
    }
}

/// Scales every column to unit norm and returns the original norms, so that
/// amplitude `x_j` on the normalized atom corresponds to `x_j / scale_j` on
/// the raw one.
pub fn normalize_columns(d: &Dictionary) -> Result<(Dictionary, Vec<f64>)> {
    let mut m = d.matrix.clone();
    let mut scales = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let col = m.col_mut(j);
        let s = norm2(col);
        if s.is_nan() || s < ZERO_COLUMN_NORM {
            return Err(DictionaryError::ZeroColumn { index: j });
        }
        if s != 1.0 {
            col.iter_mut().for_each(|v| *v /= s);
        }
        scales.push(s);
    }
    Ok((
        Dictionary {
            matrix: m,
            normalized: true,
        },
        scales,
    ))
}

/// `max_{i≠j} |a_iᵀ a_j|` over a normalized dictionary.
pub fn mutual_coherence(d: &Dictionary) -> Result<f64> {
    if !d.normalized {
        return Err(DictionaryError::NotNormalized);
    }
    let n = d.n_atoms();
    if n < 2 {
        return Err(DictionaryError::TooFewAtoms);
    }
    let m = &d.matrix;
    let best = (0..n)
        .map(|i| {
            let ai = m.col(i);
            ((i + 1)..n)
                .map(|j| dot(ai, m.col(j)).abs())
                .fold(0.0_f64, f64::max)
        })
        .fold(0.0_f64, f64::max);
    Ok(best)
}

/// Parameters of an up-sampled convolution model: spikes live on a fine grid
/// `upsampling_factor` times denser than the observation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionSpec {
    /// Filter samples on the fine grid, starting at lag 0.
    pub impulse_response: Vec<f64>,
    /// Number of fine-grid spike positions (atoms).
    pub signal_length: usize,
    pub upsampling_factor: usize,
    /// Number of observation samples.
    pub observation_length: usize,
}

/// Output of [`build_convolution_dictionary`].
#[derive(Debug, Clone)]
pub struct ConvolutionDictionary {
    pub dictionary: Dictionary,
    /// Pre-normalization column norms.
    pub scales: Vec<f64>,
    /// Number of atoms actually kept; trailing fine positions whose response
    /// lies entirely past the observation window are dropped.
    pub signal_length: usize,
}

impl ConvolutionSpec {
    fn validate(&self) -> Result<()> {
        if self.impulse_response.is_empty() {
            return Err(DictionaryError::InvalidSpec(
                "empty impulse response".into(),
            ));
        }
        if self.impulse_response.iter().any(|v| !v.is_finite()) {
            return Err(DictionaryError::InvalidSpec(
                "impulse response has non-finite samples".into(),
            ));
        }
        if self.upsampling_factor == 0 {
            return Err(DictionaryError::InvalidSpec(
                "upsampling factor must be positive".into(),
            ));
        }
        if self.observation_length == 0 || self.signal_length == 0 {
            return Err(DictionaryError::InvalidSpec(
                "signal and observation lengths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Raw (unnormalized) atom at fine position `j`: `h[n·u - j]` for each
    /// observation sample `n`.
    pub fn raw_atom(&self, j: usize) -> Vec<f64> {
        let u = self.upsampling_factor;
        let h = &self.impulse_response;
        (0..self.observation_length)
            .map(|n| {
                (n * u)
                    .checked_sub(j)
                    .and_then(|k| h.get(k).copied())
                    .unwrap_or(0.0)
            })
            .collect()
    }
}

/// Builds the column-normalized up-sampled convolution dictionary.
///
/// Trailing positions whose response never reaches an observation sample are
/// excluded and the reduced signal length is reported; any other zero column
/// is an error.
pub fn build_convolution_dictionary(spec: &ConvolutionSpec) -> Result<ConvolutionDictionary> {
    spec.validate()?;
    let columns: Vec<Vec<f64>> = (0..spec.signal_length).map(|j| spec.raw_atom(j)).collect();
    let kept = columns
        .iter()
        .rposition(|c| norm2(c) >= ZERO_COLUMN_NORM)
        .map_or(0, |p| p + 1);
    if kept == 0 {
        return Err(DictionaryError::ZeroColumn { index: 0 });
    }
    let raw = DenseMatrix::from_columns(spec.observation_length, &columns[..kept])?;
    let (dictionary, scales) = normalize_columns(&Dictionary::new(raw)?)?;
    Ok(ConvolutionDictionary {
        dictionary,
        scales,
        signal_length: kept,
    })
}

/// Gaussian-windowed cosine `h(t) = exp(-t²/(2σ²)) cos(2π f t)` with `t`
/// measured in observation samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPulse {
    pub sigma: f64,
    pub freq: f64,
}

impl Default for GaussianPulse {
    /// Calibrated so that the default 350 × 1000 dictionary at up-sampling 3
    /// has mutual coherence ≈ 0.81.
    fn default() -> Self {
        Self {
            sigma: 1.5,
            freq: 0.3,
        }
    }
}

impl GaussianPulse {
    /// Samples on a fine grid of `upsampling` points per observation sample,
    /// truncated at ±4σ and centered in the returned buffer.
    pub fn samples(&self, upsampling: usize) -> Vec<f64> {
        let u = upsampling.max(1) as f64;
        let half = (4.0 * self.sigma * u).ceil().max(0.0) as usize;
        (0..=2 * half)
            .map(|k| {
                let t = (k as f64 - half as f64) / u;
                (-t * t / (2.0 * self.sigma * self.sigma)).exp()
                    * (2.0 * std::f64::consts::PI * self.freq * t).cos()
            })
            .collect()
    }
}

/// Default benchmark geometry: 350 observations, 1000 atoms, up-sampling 3.
pub const DEFAULT_N_OBS: usize = 350;
pub const DEFAULT_N_ATOMS: usize = 1000;
pub const DEFAULT_UPSAMPLING: usize = 3;

pub fn pulse_convolution_spec(
    pulse: GaussianPulse,
    n_obs: usize,
    n_atoms: usize,
    upsampling: usize,
) -> ConvolutionSpec {
    ConvolutionSpec {
        impulse_response: pulse.samples(upsampling),
        signal_length: n_atoms,
        upsampling_factor: upsampling,
        observation_length: n_obs,
    }
}

pub fn default_convolution_spec() -> ConvolutionSpec {
    pulse_convolution_spec(
        GaussianPulse::default(),
        DEFAULT_N_OBS,
        DEFAULT_N_ATOMS,
        DEFAULT_UPSAMPLING,
    )
}

/// Writes `rows cols` then the row-major entries, one matrix row per line.
pub fn write_matrix_text<W: Write>(m: &DenseMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        let line: Vec<String> = (0..m.cols())
            .map(|j| format!("{:.16e}", m.get(i, j)))
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_text<R: BufRead>(input: R) -> Result<DenseMatrix> {
    let mut tokens = Vec::new();
    let mut header: Option<(usize, usize)> = None;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if header.is_none() {
            let dims: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| DictionaryError::Parse(format!("bad header {line:?}: {e}")))?;
            if dims.len() != 2 {
                return Err(DictionaryError::Parse(format!(
                    "header must be `rows cols`, got {line:?}"
                )));
            }
            header = Some((dims[0], dims[1]));
            continue;
        }
        for t in line.split_whitespace() {
            tokens.push(
                t.parse::<f64>()
                    .map_err(|e| DictionaryError::Parse(format!("bad value {t:?}: {e}")))?,
            );
        }
    }
    let (rows, cols) = header.ok_or_else(|| DictionaryError::Parse("missing header".into()))?;
    if tokens.len() != rows * cols {
        return Err(DictionaryError::Parse(format!(
            "expected {} values, found {}",
            rows * cols,
            tokens.len()
        )));
    }
    Ok(DenseMatrix::from_row_major(rows, cols, &tokens)?)
}
