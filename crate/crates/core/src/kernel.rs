//! Exponential kernels over the tree distances and Gram-matrix diagnostics.
//!
//! `k(μ, ν) = exp(−t·D(μ, ν))` is positive definite whenever `D` is
//! negative definite, which holds for the tree-Wasserstein distance, the
//! box-robust distance, and the ball-robust distance with `p ≥ 2`. The
//! kernel is infinitely divisible, so a Gram matrix for bandwidth `t` is the
//! elementwise `t`-th power of the one for `t = 1`.

use core::fmt;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::math::{exp, powf};
use crate::measure::Measure;
use crate::robust::{ball_value, box_value, dual_norm, Exponent};
use crate::transport::{compensated_sum, h_profile, h_vector_full};
use crate::tree::{EdgeVector, Tree};

/// Largest matrix for which the dense eigenvalue check runs.
pub const MAX_EIGEN_SIZE: usize = 2048;
/// Per-row slack for "positive semidefinite": `λ_min ≥ −PSD_TOLERANCE · n`.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Which distance a matrix is built from.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Tw,
    RtBox { beta: EdgeVector },
    RtBall { p: Exponent, lambda: f64 },
}

impl Metric {
    pub fn validate(&self, tree: &Tree) -> Result<()> {
        match self {
            Metric::Tw => Ok(()),
            Metric::RtBox { beta } => crate::robust::UncertaintySpec::Box {
                alpha: None,
                beta: beta.clone(),
            }
            .validate(tree),
            Metric::RtBall { lambda, .. } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(Error::InvalidRadius(*lambda));
                }
                Ok(())
            }
        }
    }

    /// Distance between two measures; the metric must already be validated.
    pub fn distance(&self, tree: &Tree, mu: &Measure, nu: &Measure) -> Result<f64> {
        let profile = h_profile(tree, mu, nu)?;
        Ok(match self {
            Metric::Tw => profile.weighted_sum(),
            Metric::RtBox { beta } => box_value(&profile, beta),
            Metric::RtBall { p, lambda } => ball_value(&profile, *p, *lambda),
        })
    }

    /// As [`Metric::distance`] with compensated summation of the edge terms.
    pub fn distance_compensated(&self, tree: &Tree, mu: &Measure, nu: &Measure) -> Result<f64> {
        let profile = h_profile(tree, mu, nu)?;
        Ok(match self {
            Metric::Tw => profile.weighted_sum_compensated(),
            Metric::RtBox { beta } => compensated_sum(
                profile
                    .edges
                    .iter()
                    .zip(&profile.w)
                    .zip(&profile.h)
                    .map(|((&e, w), h)| (w + beta[e]) * h),
            ),
            Metric::RtBall { p, lambda } => {
                profile.weighted_sum_compensated() + lambda * dual_norm(&profile.h, *p)
            }
        })
    }

    /// As [`Metric::distance`], touching every edge of the tree.
    pub fn distance_full(&self, tree: &Tree, mu: &Measure, nu: &Measure) -> Result<f64> {
        let h = h_vector_full(tree, mu, nu)?;
        let w = |e: usize| tree.edge_weight(e);
        Ok(match self {
            Metric::Tw => h.iter().enumerate().fold(0.0, |s, (e, h)| s + w(e) * h),
            Metric::RtBox { beta } => h
                .iter()
                .enumerate()
                .fold(0.0, |s, (e, h)| s + (w(e) + beta[e]) * h),
            Metric::RtBall { p, lambda } => {
                h.iter().enumerate().fold(0.0, |s, (e, h)| s + w(e) * h)
                    + lambda * dual_norm(h.as_slice(), *p)
            }
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Tw => f.write_str("tw"),
            Metric::RtBox { beta } => {
                let lo = beta.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = beta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if beta.is_empty() || lo == hi {
                    write!(f, "rt-box(beta={})", if beta.is_empty() { 0.0 } else { lo })
                } else {
                    write!(f, "rt-box(beta in [{lo}, {hi}])")
                }
            }
            Metric::RtBall { p, lambda } => write!(f, "rt-ball(p={p}, lambda={lambda})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub metric: Metric,
    pub t: f64,
}

impl KernelConfig {
    pub fn validate(&self, tree: &Tree) -> Result<()> {
        check_bandwidth(self.t)?;
        if let Metric::RtBall { p, .. } = self.metric {
            if p.value() < 2.0 {
                return Err(Error::PLessThanTwoForKernel(p.value()));
            }
        }
        self.metric.validate(tree)
    }
}

fn check_bandwidth(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidBandwidth(t));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Distance,
    Kernel,
}

/// A dense symmetric matrix, row-major with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
    kind: MatrixKind,
    pub provenance: String,
}

impl SymmetricMatrix {
    /// Fill from the strict upper triangle; `upper(i, j)` is called once per
    /// `i < j`. The diagonal is 0 for distances and 1 for kernels.
    pub fn from_upper<F>(n: usize, kind: MatrixKind, mut upper: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<f64>,
    {
        let diag = match kind {
            MatrixKind::Distance => 0.0,
            MatrixKind::Kernel => 1.0,
        };
        let mut data = alloc::vec![diag; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let x = upper(i, j)?;
                data[i * n + j] = x;
                data[j * n + i] = x;
            }
        }
        Ok(Self {
            n,
            data,
            kind,
            provenance: String::new(),
        })
    }

    /// Build from full row-major data, mirroring the upper triangle and
    /// resetting the diagonal.
    pub fn from_row_major(n: usize, kind: MatrixKind, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Self::from_upper(n, kind, |i, j| Ok(data[i * n + j]))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Strict upper triangle, row by row.
    pub fn upper_triangle(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| self.get(i, j)))
    }

    pub fn min_eigenvalue(&self) -> Option<f64> {
        min_eigenvalue(self.n, &self.data)
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue()
            .is_none_or(|ev| ev >= -PSD_TOLERANCE * self.n as f64)
    }

    /// `exp(−t·D)` for a distance matrix.
    pub fn to_kernel(&self, t: f64) -> Result<SymmetricMatrix> {
        check_bandwidth(t)?;
        if self.kind != MatrixKind::Distance {
            return Err(Error::WrongMatrixKind);
        }
        let mut k = Self::from_upper(self.n, MatrixKind::Kernel, |i, j| {
            Ok(exp(-t * self.get(i, j)))
        })?;
        k.provenance = format!("{};t={t}", self.provenance);
        Ok(k)
    }
}

/// All pairwise distances, one evaluation per unordered pair.
pub fn distance_matrix(
    tree: &Tree,
    measures: &[Measure],
    metric: &Metric,
) -> Result<SymmetricMatrix> {
    metric.validate(tree)?;
    for m in measures {
        m.check_tree(tree)?;
    }
    let mut d = SymmetricMatrix::from_upper(measures.len(), MatrixKind::Distance, |i, j| {
        metric.distance(tree, &measures[i], &measures[j])
    })?;
    d.provenance = format!("{metric}");
    Ok(d)
}

/// `K_ij = exp(−t·D(μ_i, μ_j))` with a unit diagonal.
pub fn gram_matrix(
    tree: &Tree,
    measures: &[Measure],
    cfg: &KernelConfig,
) -> Result<SymmetricMatrix> {
    cfg.validate(tree)?;
    distance_matrix(tree, measures, &cfg.metric)?.to_kernel(cfg.t)
}

/// `q`-quantile (`q` in percent) of sorted data, linear interpolation
/// between order statistics.
pub fn quantile_sorted(sorted: &[f64], percent: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::InvalidQuantile(percent));
    }
    if sorted.is_empty() {
        return Err(Error::DegenerateDistances);
    }
    let pos = percent / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

/// Multipliers applied to each quantile to form `1/t` candidates.
pub const BANDWIDTH_MULTIPLIERS: [f64; 3] = [1.0, 2.0, 5.0];
/// Quantile levels 10, 20, …, 90.
pub const DEFAULT_QUANTILES: [f64; 9] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub percent: f64,
    pub multiplier: f64,
    /// `1/t = multiplier · q_percent`
    pub inverse_t: f64,
}

impl Bandwidth {
    pub fn t(&self) -> f64 {
        1.0 / self.inverse_t
    }
}

/// `1/t` candidates `{q_s, 2q_s, 5q_s}` for each requested percent `s`,
/// with quantiles taken over the off-diagonal distances.
pub fn quantile_bandwidths(d: &SymmetricMatrix, percents: &[f64]) -> Result<Vec<Bandwidth>> {
    if d.kind() != MatrixKind::Distance {
        return Err(Error::WrongMatrixKind);
    }
    bandwidths_from(d.upper_triangle().collect(), percents)
}

/// As [`quantile_bandwidths`], over a seeded random subset of `count`
/// off-diagonal distances.
pub fn quantile_bandwidths_subsampled(
    d: &SymmetricMatrix,
    percents: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Bandwidth>> {
    if d.kind() != MatrixKind::Distance {
        return Err(Error::WrongMatrixKind);
    }
    let all: Vec<f64> = d.upper_triangle().collect();
    if count >= all.len() {
        return bandwidths_from(all, percents);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, all.len(), count)
        .into_iter()
        .map(|i| all[i])
        .collect();
    bandwidths_from(picked, percents)
}

fn bandwidths_from(mut values: Vec<f64>, percents: &[f64]) -> Result<Vec<Bandwidth>> {
    if !values.iter().any(|&x| x > 0.0) {
        return Err(Error::DegenerateDistances);
    }
    values.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(percents.len() * BANDWIDTH_MULTIPLIERS.len());
    for &s in percents {
        let q = quantile_sorted(&values, s)?;
        if q <= 0.0 {
            return Err(Error::DegenerateDistances);
        }
        for &m in &BANDWIDTH_MULTIPLIERS {
            out.push(Bandwidth {
                percent: s,
                multiplier: m,
                inverse_t: m * q,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegDefReport {
    pub size: usize,
    pub trials: usize,
    pub tolerance: f64,
    /// Largest `cᵀDc` over the zero-sum trials.
    pub max_quadratic_form: f64,
    /// `(trial, cᵀDc)` for every trial above the tolerance.
    pub failures: Vec<(usize, f64)>,
    /// Smallest eigenvalue of `−JDJ` with `J = I − 11ᵀ/n`; `None` above
    /// [`MAX_EIGEN_SIZE`].
    pub min_centered_eigenvalue: Option<f64>,
}

impl NegDefReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && self
                .min_centered_eigenvalue
                .is_none_or(|ev| ev >= -PSD_TOLERANCE * self.size as f64)
    }
}

/// Random zero-sum quadratic forms `cᵀDc` (all must be `≤ tol`) plus the
/// spectrum of the doubly centred `−D`.
pub fn check_negative_definite(
    d: &SymmetricMatrix,
    trials: usize,
    tol: f64,
    seed: u64,
) -> NegDefReport {
    let n = d.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = NegDefReport {
        size: n,
        trials,
        tolerance: tol,
        max_quadratic_form: f64::NEG_INFINITY,
        failures: Vec::new(),
        min_centered_eigenvalue: None,
    };
    if n < 2 {
        report.max_quadratic_form = 0.0;
        return report;
    }
    let mut c = alloc::vec![0.0; n];
    for trial in 0..trials {
        for x in &mut c {
            *x = rng.gen_range(-1.0..1.0);
        }
        let mean = c.iter().sum::<f64>() / n as f64;
        for x in &mut c {
            *x -= mean;
        }
        let form: f64 = (0..n)
            .map(|i| c[i] * d.row(i).iter().zip(&c).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        report.max_quadratic_form = report.max_quadratic_form.max(form);
        if form > tol {
            report.failures.push((trial, form));
        }
    }
    if n <= MAX_EIGEN_SIZE {
        let row_mean: Vec<f64> = (0..n)
            .map(|i| d.row(i).iter().sum::<f64>() / n as f64)
            .collect();
        let grand = row_mean.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = (0..n)
            .flat_map(|i| {
                let row_mean = &row_mean;
                (0..n).map(move |j| -(d.get(i, j) - row_mean[i] - row_mean[j] + grand))
            })
            .collect();
        report.min_centered_eigenvalue = min_eigenvalue(n, &centered);
    }
    report
}

/// Elementwise `n`-th root `K^{1/n}` of a kernel matrix, i.e. the same
/// kernel at bandwidth `t/n`.
pub fn divisibility_root(k: &SymmetricMatrix, n: u32) -> Result<SymmetricMatrix> {
    if k.kind() != MatrixKind::Kernel {
        return Err(Error::WrongMatrixKind);
    }
    let n = n.max(1);
    if n == 1 {
        return Ok(k.clone());
    }
    let inv = 1.0 / f64::from(n);
    let mut out = SymmetricMatrix::from_upper(k.size(), MatrixKind::Kernel, |i, j| {
        Ok(powf(k.get(i, j), inv))
    })?;
    out.provenance = format!("{};root={n}", k.provenance);
    Ok(out)
}
