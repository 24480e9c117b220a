//! Randomized witnesses for the algebraic identities and inequalities that
//! turn `Σ h_ij²` into a bound by `2σ_2` for trace-free `h`.
//!
//! Sums written `Σ_{i<j}` and `Σ_{i≠j}` range over index pairs of an `n × n`
//! matrix, `n = 2k`. For trace-free `h`,
//! `Σ_{i≠j} h_ij² - 2σ_2 = Σ_{i<j} (h_ij + h_ji)² + Σ_i h_ii² ≥ 0`,
//! with equality exactly for skew-symmetric `h`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A square matrix of even dimension, optionally projected to trace zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSample {
    pub dim: usize,
    /// Row-major entries.
    pub entries: Vec<f64>,
    pub trace_free: bool,
}

impl MatrixSample {
    /// Builds a sample; with `trace_free` the mean of the diagonal is removed.
    pub fn new(dim: usize, entries: Vec<f64>, trace_free: bool) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::InvalidInput(format!("matrix dimension must be even and positive, got {dim}")));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        let mut s = MatrixSample { dim, entries, trace_free: false };
        if trace_free {
            s.remove_trace();
        }
        Ok(s)
    }

    fn remove_trace(&mut self) {
        let shift = self.trace() / self.dim as f64;
        for i in 0..self.dim {
            self.entries[i * self.dim + i] -= shift;
        }
        self.trace_free = true;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|e| e * e).sum()
    }

    /// `(h - hᵀ) / 2`
    pub fn skew_part(&self) -> Self {
        let n = self.dim;
        let entries = (0..n * n)
            .map(|p| {
                let (i, j) = (p / n, p % n);
                0.5 * (self.get(i, j) - self.get(j, i))
            })
            .collect();
        MatrixSample { dim: n, entries, trace_free: true }
    }

    fn require_trace_free(&self) -> Result<()> {
        let scale = self.entries.iter().fold(1.0f64, |m, e| m.max(e.abs())) * self.dim as f64;
        let tr = self.trace();
        if !self.trace_free || tr.abs() > 1e-12 * scale {
            return Err(Error::NotTraceFree { trace: tr });
        }
        Ok(())
    }
}

fn scale_of(h: &MatrixSample) -> f64 {
    h.frobenius_sq().max(f64::MIN_POSITIVE)
}

fn diag_pair_sums(h: &MatrixSample) -> (f64, f64, f64) {
    // (Σ_{i<j} (h_ii - h_jj)², Σ_i h_ii², Σ_{i<j} h_ii h_jj)
    let n = h.dim;
    let (mut spread, mut sq, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let a = h.get(i, i);
        sq += a * a;
        for j in (i + 1)..n {
            let b = h.get(j, j);
            spread += (a - b) * (a - b);
            cross += a * b;
        }
    }
    (spread, sq, cross)
}

/// `|Σ_{i<j}(h_ii - h_jj)² - ((n-1) Σ_i h_ii² - 2 Σ_{i<j} h_ii h_jj)|`; holds for every matrix.
pub fn check_identity_sq_diff(h: &MatrixSample) -> f64 {
    let (spread, sq, cross) = diag_pair_sums(h);
    (spread - ((h.dim as f64 - 1.0) * sq - 2.0 * cross)).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossResidual {
    /// `|Σ_{i<j}(h_ij + h_ji)² - (Σ_{i≠j} h_ij² + 2 Σ_{i<j} h_ij h_ji)|`
    pub plain: f64,
    /// The same identity multiplied through by `n = 2k`, evaluated term by term.
    pub scaled: f64,
}

fn offdiag_sums(h: &MatrixSample) -> (f64, f64, f64) {
    // (Σ_{i<j}(h_ij + h_ji)², Σ_{i≠j} h_ij², Σ_{i<j} h_ij h_ji)
    let n = h.dim;
    let (mut sym, mut off, mut prod) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a = h.get(i, j);
            off += a * a;
            if i < j {
                let b = h.get(j, i);
                sym += (a + b) * (a + b);
                prod += a * b;
            }
        }
    }
    (sym, off, prod)
}

pub fn check_identity_cross(h: &MatrixSample) -> CrossResidual {
    let (sym, off, prod) = offdiag_sums(h);
    let n = h.dim as f64;
    CrossResidual {
        plain: (sym - (off + 2.0 * prod)).abs(),
        scaled: (n * sym - (n * off + 2.0 * n * prod)).abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracefreeResidual {
    /// `|-2 Σ_{i<j} h_ii h_jj - Σ_i h_ii²|`
    pub diagonal_square: f64,
    /// `|Σ_{i<j}(h_ii - h_jj)² + 2n Σ_{i<j} h_ii h_jj|`
    pub diagonal_spread: f64,
}

pub fn check_tracefree_identity(h: &MatrixSample) -> Result<TracefreeResidual> {
    h.require_trace_free()?;
    let (spread, sq, cross) = diag_pair_sums(h);
    let n = h.dim as f64;
    Ok(TracefreeResidual {
        diagonal_square: (-2.0 * cross - sq).abs(),
        diagonal_spread: (spread + 2.0 * n * cross).abs(),
    })
}

/// `σ_2 = Σ_{i<j} (h_ii h_jj - h_ij h_ji)` (sum of principal 2×2 minors).
pub fn sigma2_minors(h: &MatrixSample) -> f64 {
    let n = h.dim;
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += h.get(i, i) * h.get(j, j) - h.get(i, j) * h.get(j, i);
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Margin {
    pub sigma2: f64,
    /// `Σ_{i≠j} h_ij² - 2σ_2`
    pub offdiag: f64,
    /// `Σ_{i,j} h_ij² - 2σ_2`
    pub full: f64,
}

pub fn check_sigma2_inequality(h: &MatrixSample) -> Result<Sigma2Margin> {
    h.require_trace_free()?;
    let (_, off, _) = offdiag_sums(h);
    let (_, sq, _) = diag_pair_sums(h);
    let sigma2 = sigma2_minors(h);
    Ok(Sigma2Margin { sigma2, offdiag: off - 2.0 * sigma2, full: sq + off - 2.0 * sigma2 })
}

/// Uniform entries in `[-scale, scale)` drawn row-major from `ChaCha8Rng::seed_from_u64(seed)`,
/// followed by removal of the trace.
pub fn random_tracefree(seed: u64, dim: usize, scale: f64) -> Result<MatrixSample> {
    let raw = random_matrix(seed, dim, scale, false)?;
    MatrixSample::new(dim, raw.entries, true)
}

fn random_matrix(seed: u64, dim: usize, scale: f64, heavy: bool) -> Result<MatrixSample> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::InvalidInput(format!("matrix dimension must be even and positive, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..dim * dim)
        .map(|_| {
            let u: f64 = rng.random();
            if heavy {
                // Cauchy tails, truncated away from the poles
                scale * (std::f64::consts::PI * (u.clamp(1e-9, 1.0 - 1e-9) - 0.5)).tan()
            } else {
                scale * (2.0 * u - 1.0)
            }
        })
        .collect();
    MatrixSample::new(dim, entries, false)
}

/// Per-sample seed: SplitMix64 of the stream seed, dimension and index.
pub fn sample_seed(seed: u64, dim: usize, index: u64) -> u64 {
    let mut z = seed ^ ((dim as u64) << 56) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    pub samples: u64,
    pub dims: Vec<usize>,
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub heavy_tailed: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig { samples: 100_000, dims: vec![2, 4, 6], seed: 0, scale: 1.0, heavy_tailed: false }
    }
}

/// Relative residual threshold for identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Lower bound for inequality margins.
pub const MARGIN_TOL: f64 = -1e-12;
/// Upper bound for margins in the equality (skew) case.
pub const EQUALITY_TOL: f64 = 1e-12;
/// Relative agreement of the two `σ_2` evaluations.
pub const SIGMA2_AGREEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    DiagonalSpread,
    DiagonalSquareTracefree,
    DiagonalSpreadTracefree,
    OffdiagonalCross,
    OffdiagonalCrossScaled,
    Sigma2Offdiagonal,
    Sigma2Full,
    SkewEquality,
    Sigma2TwoWays,
}

const CHECKS: [Check; 9] = [
    Check::DiagonalSpread,
    Check::DiagonalSquareTracefree,
    Check::DiagonalSpreadTracefree,
    Check::OffdiagonalCross,
    Check::OffdiagonalCrossScaled,
    Check::Sigma2Offdiagonal,
    Check::Sigma2Full,
    Check::SkewEquality,
    Check::Sigma2TwoWays,
];

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::DiagonalSpread => "diagonal_spread",
            Check::DiagonalSquareTracefree => "diagonal_square_tracefree",
            Check::DiagonalSpreadTracefree => "diagonal_spread_tracefree",
            Check::OffdiagonalCross => "offdiagonal_cross",
            Check::OffdiagonalCrossScaled => "offdiagonal_cross_scaled",
            Check::Sigma2Offdiagonal => "sigma2_offdiagonal",
            Check::Sigma2Full => "sigma2_full",
            Check::SkewEquality => "skew_equality",
            Check::Sigma2TwoWays => "sigma2_two_ways",
        }
    }

    /// Margin rows are minimized, all others maximized.
    fn is_margin(&self) -> bool {
        matches!(self, Check::Sigma2Offdiagonal | Check::Sigma2Full)
    }

    fn threshold(&self) -> f64 {
        match self {
            Check::Sigma2Offdiagonal | Check::Sigma2Full => MARGIN_TOL,
            Check::SkewEquality => EQUALITY_TOL,
            Check::Sigma2TwoWays => SIGMA2_AGREEMENT_TOL,
            _ => IDENTITY_TOL,
        }
    }

    fn passes(&self, value: f64) -> bool {
        if self.is_margin() {
            value >= self.threshold()
        } else if *self == Check::SkewEquality {
            value < self.threshold()
        } else {
            value <= self.threshold()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRow {
    pub check: Check,
    pub dim: usize,
    pub samples: u64,
    /// Max relative residual, or min normalized margin for margin rows.
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: Check,
    pub dim: usize,
    pub sample_index: u64,
    pub value: f64,
    pub matrix: MatrixSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabReport {
    pub config: LabConfig,
    pub rows: Vec<LabRow>,
    pub passed: bool,
    pub violation: Option<Violation>,
}

/// Values of all checks on one raw sample. Margins are divided by
/// `max(1, |h|_F²)`; residuals by `|h|_F²`.
fn evaluate_sample(raw: &MatrixSample) -> [f64; 9] {
    let tf = MatrixSample::new(raw.dim, raw.entries.clone(), true).expect("validated dimension");
    let skew = raw.skew_part();
    let (sa, st) = (scale_of(raw), scale_of(&tf));
    let cross_raw = check_identity_cross(raw);
    let cross_tf = check_identity_cross(&tf);
    let n = raw.dim as f64;
    let tfr = check_tracefree_identity(&tf).expect("projected");
    let marg = check_sigma2_inequality(&tf).expect("projected");
    let skew_m = check_sigma2_inequality(&skew).expect("skew is trace-free");
    let mscale = tf.frobenius_sq().max(1.0);
    let newton = sigma2_newton(&tf);
    [
        (check_identity_sq_diff(raw) / sa).max(check_identity_sq_diff(&tf) / st),
        tfr.diagonal_square / st,
        tfr.diagonal_spread / st,
        (cross_raw.plain / sa).max(cross_tf.plain / st),
        (cross_raw.scaled / (n * sa)).max(cross_tf.scaled / (n * st)),
        marg.offdiag / mscale,
        marg.full / mscale,
        skew_m.offdiag.abs().max(skew_m.full.abs()) / skew.frobenius_sq().max(1.0),
        (marg.sigma2 - newton).abs() / st,
    ]
}

/// `σ_2` through power traces: `(tr(h)² - tr(h²)) / 2`.
fn sigma2_newton(h: &MatrixSample) -> f64 {
    let n = h.dim;
    let tr = h.trace();
    let mut tr2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr2 += h.get(i, j) * h.get(j, i);
        }
    }
    0.5 * (tr * tr - tr2)
}

#[derive(Clone)]
struct Acc {
    value: [f64; 9],
    first_bad: Option<(u64, usize, f64)>,
}

impl Acc {
    fn empty() -> Self {
        let mut value = [f64::NEG_INFINITY; 9];
        for (v, c) in value.iter_mut().zip(CHECKS) {
            if c.is_margin() {
                *v = f64::INFINITY;
            }
        }
        Acc { value, first_bad: None }
    }

    fn push(mut self, idx: u64, vals: [f64; 9]) -> Self {
        for (r, c) in CHECKS.iter().enumerate() {
            self.value[r] = if c.is_margin() { self.value[r].min(vals[r]) } else { self.value[r].max(vals[r]) };
            if !c.passes(vals[r]) && self.first_bad.is_none_or(|(i, _, _)| idx < i) {
                self.first_bad = Some((idx, r, vals[r]));
            }
        }
        self
    }

    fn merge(mut self, other: Acc) -> Self {
        for (r, c) in CHECKS.iter().enumerate() {
            self.value[r] = if c.is_margin() {
                self.value[r].min(other.value[r])
            } else {
                self.value[r].max(other.value[r])
            };
        }
        self.first_bad = match (self.first_bad, other.first_bad) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Runs every check over `samples` random matrices per dimension.
pub fn run_lab(cfg: &LabConfig) -> Result<LabReport> {
    if !(cfg.scale.is_finite() && cfg.scale >= 0.0) {
        return Err(Error::InvalidInput(format!("scale must be non-negative, got {}", cfg.scale)));
    }
    let mut rows = Vec::new();
    let mut violation = None;
    for &dim in &cfg.dims {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::InvalidInput(format!("matrix dimension must be even and positive, got {dim}")));
        }
        let acc = (0..cfg.samples)
            .into_par_iter()
            .fold(Acc::empty, |acc, i| {
                let raw = random_matrix(sample_seed(cfg.seed, dim, i), dim, cfg.scale, cfg.heavy_tailed)
                    .expect("validated dimension");
                acc.push(i, evaluate_sample(&raw))
            })
            .reduce(Acc::empty, Acc::merge);
        if cfg.samples > 0 {
            for (r, c) in CHECKS.iter().enumerate() {
                rows.push(LabRow {
                    check: *c,
                    dim,
                    samples: cfg.samples,
                    value: acc.value[r],
                    threshold: c.threshold(),
                    passed: c.passes(acc.value[r]),
                });
            }
        }
        if violation.is_none() {
            if let Some((idx, r, value)) = acc.first_bad {
                let raw = random_matrix(sample_seed(cfg.seed, dim, idx), dim, cfg.scale, cfg.heavy_tailed)?;
                violation = Some(Violation { check: CHECKS[r], dim, sample_index: idx, value, matrix: raw });
            }
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(LabReport { config: cfg.clone(), rows, passed, violation })
}
