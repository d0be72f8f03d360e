//! Randomized diagonal and trace estimators, their aggregation, and
//! sample-size calculators.
//!
//! One query with probes `g^(1..N-1)` and `g = g^(1) * ⋯ * g^(N-1)` gives
//!
//! ```text
//! y = g * (A ×̄_1 g^(1) ⋯ ×̄_{N-1} g^(N-1))     E[y_i] = a_{i,...,i}
//! X = gᵀ (A ×̄_1 g^(1) ⋯ ×̄_{N-1} g^(N-1))     E[X]   = tr(A)
//! ```
//!
//! For `N = 2` with Rademacher probes these are the Hutchinson trace and the
//! Bekas-Kokiopoulou-Saad diagonal estimators.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{mean, median, pairwise_sum};
use crate::probes::{derive_run_seed, sample_probe_set, ProbeDistribution, ProbeSet};
use crate::tensor::TensorOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateKind {
    Trace,
    Diagonal,
}

impl FromStr for EstimateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(EstimateKind::Trace),
            "diag" | "diagonal" => Ok(EstimateKind::Diagonal),
            other => Err(Error::InvalidArgument(format!("unknown target {other:?}"))),
        }
    }
}

/// A scalar (trace) or per-entry (diagonal) estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Estimate {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Estimate::Scalar(x) => Some(*x),
            Estimate::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Estimate::Scalar(_) => None,
            Estimate::Vector(v) => Some(v),
        }
    }
}

/// `K` i.i.d. raw estimates plus their aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub kind: EstimateKind,
    /// One entry per sample; trace samples have length 1.
    pub samples: Vec<Vec<f64>>,
    pub mean_estimate: Estimate,
    pub mom_estimate: Option<Estimate>,
    pub queries_used: u64,
}

impl EstimateSeries {
    fn from_samples(kind: EstimateKind, samples: Vec<Vec<f64>>, queries_used: u64) -> Self {
        let mean_estimate = aggregate(kind, &samples, mean);
        Self { kind, samples, mean_estimate, mom_estimate: None, queries_used }
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    /// Trace samples as a flat vector; `None` for diagonal series.
    pub fn trace_samples(&self) -> Option<Vec<f64>> {
        (self.kind == EstimateKind::Trace).then(|| self.samples.iter().map(|s| s[0]).collect())
    }

    /// Samples of diagonal entry `i`.
    pub fn entry_samples(&self, i: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[i]).collect()
    }

    /// Fills `mom_estimate` using `r` groups of consecutive samples.
    pub fn with_median_of_means(mut self, r: usize) -> Result<Self> {
        let mut err = None;
        let est = aggregate(self.kind, &self.samples, |xs| {
            aggregate_median_of_means(xs, r).unwrap_or_else(|e| {
                err.get_or_insert(e);
                f64::NAN
            })
        });
        if let Some(e) = err {
            return Err(e);
        }
        self.mom_estimate = Some(est);
        Ok(self)
    }
}

fn aggregate<F: FnMut(&[f64]) -> f64>(kind: EstimateKind, samples: &[Vec<f64>], mut f: F) -> Estimate {
    let width = samples.first().map_or(0, Vec::len);
    let per_entry: Vec<f64> = (0..width)
        .map(|i| {
            let column: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            f(&column)
        })
        .collect();
    match kind {
        EstimateKind::Trace => Estimate::Scalar(per_entry.first().copied().unwrap_or(f64::NAN)),
        EstimateKind::Diagonal => Estimate::Vector(per_entry),
    }
}

/// `y = g * (A ×̄_1 g^(1) ⋯ ×̄_{N-1} g^(N-1))`; one query.
pub fn estimate_diagonal_once(oracle: &dyn TensorOracle, probe_set: &ProbeSet) -> Result<Vec<f64>> {
    let fiber = oracle.contract_all_but_last(&probe_set.probes)?;
    Ok(fiber.iter().zip(&probe_set.combined).map(|(v, g)| v * g).collect())
}

/// `X = Σ_p y_p`; one query.
pub fn estimate_trace_once(oracle: &dyn TensorOracle, probe_set: &ProbeSet) -> Result<f64> {
    Ok(pairwise_sum(&estimate_diagonal_once(oracle, probe_set)?))
}

/// Diagonal and trace estimates sharing a single query.
pub fn estimate_both_once(oracle: &dyn TensorOracle, probe_set: &ProbeSet) -> Result<(Vec<f64>, f64)> {
    let y = estimate_diagonal_once(oracle, probe_set)?;
    let x = pairwise_sum(&y);
    Ok((y, x))
}

fn draw_samples(
    oracle: &dyn TensorOracle,
    dist: ProbeDistribution,
    k: usize,
    base_seed: u64,
    run: u64,
) -> Result<Vec<(Vec<f64>, f64)>> {
    if k < 1 {
        return Err(Error::InvalidArgument("number of samples K must be >= 1".into()));
    }
    let (order, dim) = (oracle.order(), oracle.dim());
    (0..k as u64)
        .into_par_iter()
        .map(|s| {
            let probes = sample_probe_set(dist, dim, order - 1, derive_run_seed(base_seed, run, s))?;
            estimate_both_once(oracle, &probes)
        })
        .collect()
}

/// `K` samples for run `run`; sample `k` uses seed `derive_run_seed(base_seed, run, k)`.
pub fn run_samples(
    oracle: &dyn TensorOracle,
    dist: ProbeDistribution,
    k: usize,
    base_seed: u64,
    run: u64,
    kind: EstimateKind,
) -> Result<EstimateSeries> {
    let raw = draw_samples(oracle, dist, k, base_seed, run)?;
    let samples = raw
        .into_iter()
        .map(|(y, x)| match kind {
            EstimateKind::Trace => vec![x],
            EstimateKind::Diagonal => y,
        })
        .collect();
    Ok(EstimateSeries::from_samples(kind, samples, k as u64))
}

/// Trace and diagonal series from the same `K` queries.
///
/// Both series report `queries_used = K`; the oracle is queried `K` times in
/// total, not `2K`.
pub fn run_joint_samples(
    oracle: &dyn TensorOracle,
    dist: ProbeDistribution,
    k: usize,
    base_seed: u64,
    run: u64,
) -> Result<(EstimateSeries, EstimateSeries)> {
    let raw = draw_samples(oracle, dist, k, base_seed, run)?;
    let (diag, trace): (Vec<Vec<f64>>, Vec<Vec<f64>>) = raw.into_iter().map(|(y, x)| (y, vec![x])).unzip();
    Ok((
        EstimateSeries::from_samples(EstimateKind::Trace, trace, k as u64),
        EstimateSeries::from_samples(EstimateKind::Diagonal, diag, k as u64),
    ))
}

/// Median of the means of `r` consecutive groups of equal size.
pub fn aggregate_median_of_means(samples: &[f64], r: usize) -> Result<f64> {
    if r < 1 {
        return Err(Error::InvalidArgument("median-of-means needs r >= 1 groups".into()));
    }
    if samples.is_empty() || samples.len() % r != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot be split into {r} equal groups; truncate or pad K to a multiple of {r}",
            samples.len()
        )));
    }
    let s = samples.len() / r;
    let means: Vec<f64> = samples.chunks_exact(s).map(mean).collect();
    Ok(median(&means))
}

/// Number of median-of-means groups `⌈8 ln(1/δ)⌉`.
pub fn mom_groups(delta: f64) -> u64 {
    ((8.0 * (1.0 / delta).ln()).ceil() as u64).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundTarget {
    Trace,
    Diagonal(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregator {
    Mean,
    MedianOfMeans,
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "mom" | "median-of-means" => Ok(Aggregator::MedianOfMeans),
            other => Err(Error::InvalidArgument(format!("unknown aggregator {other:?}"))),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Mean => "mean",
            Aggregator::MedianOfMeans => "mom",
        })
    }
}

/// Tensor quantities the sample-size formulas need.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorStats {
    pub order: usize,
    pub frobenius_sq: f64,
    pub diag_sumsq: f64,
    pub trace: f64,
    pub diagonal: Vec<f64>,
    /// `Σ_{j_1..j_{N-1}} a_{j_1,...,j_{N-1},i}²` for each `i`.
    pub slice_sumsq: Vec<f64>,
}

/// A sample count sufficient for an `(ε, δ)` relative approximation.
///
/// For the plain mean the count carries the unknown hypercontractivity
/// constant `R` and is only meaningful up to that constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSizeBound {
    pub target: BoundTarget,
    pub dist: ProbeDistribution,
    pub aggregator: Aggregator,
    pub epsilon: f64,
    pub delta: f64,
    pub r_const: f64,
    /// The unrounded right-hand side of the bound.
    pub raw: f64,
    pub k: u64,
    pub r_groups: Option<u64>,
}

/// Sample count from the constant-explicit tail-bound expressions.
///
/// With `L = ln(1/δ)`, `q = 2(N-1)` and `V` the variance term of the chosen
/// target and distribution:
///
/// * mean: `K = ⌈2 R V (2 + L)^q / (ε² target²)⌉`
/// * median-of-means: `K = ⌈c V L / (ε² target²)⌉` with `c = 64` for the
///   Rademacher trace and `c = 32` otherwise, `r = ⌈8 L⌉`, and `K` rounded up
///   to a multiple of `r`.
///
/// `V` is `S_i - a_i²` (Rademacher diagonal),
/// `(3^{N-1}-1) a_i² + 3^{N-2} (S_i - a_i²)` (Gaussian diagonal),
/// `‖A‖_F² - Σ_j a_j²` (Rademacher trace) or `(3^{N-1}-1) ‖A‖_F²` (Gaussian
/// trace), where `S_i` is the squared norm of the slice ending at `i`.
pub fn sample_size_bound(
    target: BoundTarget,
    dist: ProbeDistribution,
    aggregator: Aggregator,
    stats: &TensorStats,
    epsilon: f64,
    delta: f64,
    r_const: f64,
) -> Result<SampleSizeBound> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0,1), got {delta}")));
    }
    if !(r_const > 0.0) {
        return Err(Error::InvalidArgument(format!("R must be > 0, got {r_const}")));
    }
    let n = stats.order as i32;
    let gauss_diag_factor = 3f64.powi(n - 1) - 1.0;
    let (variance_term, target_value) = match target {
        BoundTarget::Diagonal(i) => {
            let (&a, &slice) = stats.diagonal.get(i).zip(stats.slice_sumsq.get(i)).ok_or_else(|| {
                Error::InvalidArgument(format!("diagonal index {i} out of range 0..{}", stats.diagonal.len()))
            })?;
            let off = slice - a * a;
            let v = match dist {
                ProbeDistribution::Rademacher => off,
                ProbeDistribution::Gaussian => gauss_diag_factor * a * a + 3f64.powi(n - 2) * off,
            };
            (v, a)
        }
        BoundTarget::Trace => {
            let v = match dist {
                ProbeDistribution::Rademacher => stats.frobenius_sq - stats.diag_sumsq,
                ProbeDistribution::Gaussian => gauss_diag_factor * stats.frobenius_sq,
            };
            (v, stats.trace)
        }
    };
    if target_value == 0.0 {
        return Err(Error::Numeric(
            "target quantity is zero; relative (epsilon, delta) approximation is undefined".into(),
        ));
    }
    let log_inv_delta = (1.0 / delta).ln();
    let denom = epsilon * epsilon * target_value * target_value;
    let variance_term = variance_term.max(0.0);
    let (raw, r_groups) = match aggregator {
        Aggregator::Mean => {
            let q = 2 * (stats.order as i32 - 1);
            (2.0 * r_const * variance_term * (2.0 + log_inv_delta).powi(q) / denom, None)
        }
        Aggregator::MedianOfMeans => {
            let c = match (target, dist) {
                (BoundTarget::Trace, ProbeDistribution::Rademacher) => 64.0,
                _ => 32.0,
            };
            (c * variance_term * log_inv_delta / denom, Some(mom_groups(delta)))
        }
    };
    if !raw.is_finite() {
        return Err(Error::Numeric(format!("sample-size bound is not finite ({raw})")));
    }
    let mut k = (raw.ceil() as u64).max(1);
    if let Some(r) = r_groups {
        k = k.div_ceil(r) * r;
    }
    Ok(SampleSizeBound { target, dist, aggregator, epsilon, delta, r_const, raw, k, r_groups })
}
