//! Exact second moments of the estimators, their upper bounds, and
//! brute-force oracles used to check them.
//!
//! For probes with i.i.d. zero-mean, unit-variance entries with fourth moment
//! `m4 = E[z⁴]`:
//!
//! ```text
//! Var(y_i)      = Σ_j m4^{#{t : j_t = i}} a²_{j,i} − a²_{i,...,i}
//! Cov(y_p, y_q) = Σ_{j,k ∈ {p,q}^{N-1}, j_t ≠ k_t} a_{j,p} a_{k,q} − a_{p,...,p} a_{q,...,q}
//! Var(X)        = Σ_p Var(y_p) + 2 Σ_{p>q} Cov(y_p, y_q)
//! ```
//!
//! The covariance has exactly `2^{N-1}` terms and does not depend on `m4`:
//! the pairing `{j_t, k_t} = {p, q}` only ever involves second moments.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{run_joint_samples, TensorStats};
use crate::numeric::{mean, pairwise_sum, pairwise_sum_by, sample_variance, sum_sq};
use crate::probes::ProbeDistribution;
use crate::tensor::{diag_sumsq, frobenius_sq, increment_index, Contraction, DenseTensor, TensorOracle};

/// Largest number of sign bits `d(N-1)` [`enumerate_rademacher_exact`] accepts.
pub const ENUMERATION_BUDGET_LOG2: usize = 24;

fn check_index(tensor: &DenseTensor, i: usize) -> Result<()> {
    if i >= tensor.dim() {
        return Err(Error::InvalidArgument(format!(
            "diagonal index {i} out of range 0..{}",
            tensor.dim()
        )));
    }
    Ok(())
}

/// `Σ_{j_1..j_{N-1}} a²_{j,i}`.
pub fn slice_sumsq(tensor: &DenseTensor, i: usize) -> f64 {
    let slice: Vec<f64> = tensor.last_mode_slice(i).collect();
    sum_sq(&slice)
}

/// Everything the sample-size calculators need, read from dense storage.
pub fn tensor_stats(tensor: &DenseTensor) -> TensorStats {
    let diagonal = tensor.diagonal_entries();
    TensorStats {
        order: tensor.order(),
        frobenius_sq: frobenius_sq(tensor),
        diag_sumsq: diag_sumsq(tensor),
        trace: pairwise_sum(&diagonal),
        slice_sumsq: (0..tensor.dim()).map(|i| slice_sumsq(tensor, i)).collect(),
        diagonal,
    }
}

/// `Var(y_i)` by iterating the `d^{N-1}` tuples of the slice ending at `i`
/// and weighting each squared entry by `m4^s`, `s` = coordinates equal to `i`.
pub fn diag_variance_exact(tensor: &DenseTensor, i: usize, m4: f64) -> Result<f64> {
    check_index(tensor, i)?;
    let mut idx = vec![0usize; tensor.order() - 1];
    let weighted: Vec<f64> = tensor
        .last_mode_slice(i)
        .map(|a| {
            let s = idx.iter().filter(|&&j| j == i).count() as i32;
            increment_index(&mut idx, tensor.dim());
            m4.powi(s) * a * a
        })
        .collect();
    let a = tensor.diagonal_entry(i);
    Ok(pairwise_sum(&weighted) - a * a)
}

/// Second route to `Var(y_i)`: contract the entrywise-squared tensor with the
/// weight vector `w = 1 + (m4 - 1) e_i` in every mode but the last.
pub fn diag_variance_by_contraction(tensor: &DenseTensor, i: usize, m4: f64) -> Result<f64> {
    check_index(tensor, i)?;
    let squared = DenseTensor::new(
        tensor.order(),
        tensor.dim(),
        tensor.data().iter().map(|a| a * a).collect(),
    )?;
    let mut w = vec![1.0; tensor.dim()];
    w[i] = m4;
    let fiber = squared.contract_unchecked(&vec![w; tensor.order() - 1]);
    let a = tensor.diagonal_entry(i);
    Ok(fiber[i] - a * a)
}

/// `Cov(y_p, y_q)` for `p ≠ q` (distribution-free).
pub fn diag_covariance_exact(tensor: &DenseTensor, p: usize, q: usize) -> Result<f64> {
    check_index(tensor, p)?;
    check_index(tensor, q)?;
    if p == q {
        return Err(Error::InvalidArgument(
            "covariance needs p != q; use diag_variance_exact for p == q".into(),
        ));
    }
    let n1 = tensor.order() - 1;
    let mut j = vec![0usize; tensor.order()];
    let mut k = vec![0usize; tensor.order()];
    j[n1] = p;
    k[n1] = q;
    let terms: Vec<f64> = (0..1usize << n1)
        .map(|mask| {
            for t in 0..n1 {
                let pick_p = mask >> t & 1 == 1;
                j[t] = if pick_p { p } else { q };
                k[t] = if pick_p { q } else { p };
            }
            tensor.get(&j) * tensor.get(&k)
        })
        .collect();
    Ok(pairwise_sum(&terms) - tensor.diagonal_entry(p) * tensor.diagonal_entry(q))
}

/// `Var(X)` as the sum of all entries of the covariance matrix of `y`.
pub fn trace_variance_exact(tensor: &DenseTensor, m4: f64) -> Result<f64> {
    let d = tensor.dim();
    let vars = (0..d)
        .map(|p| diag_variance_exact(tensor, p, m4))
        .collect::<Result<Vec<_>>>()?;
    let covs = (0..d)
        .flat_map(|p| (0..p).map(move |q| (p, q)))
        .map(|(p, q)| diag_covariance_exact(tensor, p, q))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&vars) + 2.0 * pairwise_sum(&covs))
}

/// Gaussian diagonal bound
/// `(3^{N-1} - 1) a²_{i,...,i} + 3^{N-2} Σ_{j ≠ (i,...,i)} a²_{j,i}`.
pub fn diag_variance_upper_gaussian(tensor: &DenseTensor, i: usize) -> Result<f64> {
    check_index(tensor, i)?;
    let n = tensor.order() as i32;
    let a = tensor.diagonal_entry(i);
    let off = slice_sumsq(tensor, i) - a * a;
    Ok((3f64.powi(n - 1) - 1.0) * a * a + 3f64.powi(n - 2) * off)
}

/// Gaussian diagonal variance when every off-diagonal slice entry is about `ã`:
/// `(3^{N-1} - 1) a² + Σ_{s=0}^{N-2} 3^s C(N-1, s) (d-1)^{N-1-s} ã`.
///
/// `ã` enters linearly, as in the published approximation; for entries equal
/// to `ã` the exact variance has `ã²` in its place, so pass `ã²` to compare
/// against [`diag_variance_exact`] unless `ã ∈ {0, 1}`.
pub fn diag_variance_approx_equal_offdiag(tensor: &DenseTensor, i: usize, a_tilde: f64) -> Result<f64> {
    check_index(tensor, i)?;
    let n1 = tensor.order() as u32 - 1;
    let d1 = tensor.dim() as f64 - 1.0;
    let a = tensor.diagonal_entry(i);
    let spread: f64 = (0..n1)
        .map(|s| 3f64.powi(s as i32) * binomial(n1, s) * d1.powi((n1 - s) as i32) * a_tilde)
        .sum();
    Ok((3f64.powi(n1 as i32) - 1.0) * a * a + spread)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, t| acc * f64::from(n - t) / f64::from(t + 1))
}

/// Rademacher trace bound `2 (‖A‖_F² − Σ_j a²_{j,...,j})`.
pub fn trace_variance_upper_rademacher(tensor: &DenseTensor) -> f64 {
    2.0 * (frobenius_sq(tensor) - diag_sumsq(tensor))
}

/// Gaussian trace bound `(3^{N-1} − 1) ‖A‖_F²`.
pub fn trace_variance_upper_gaussian(tensor: &DenseTensor) -> f64 {
    (3f64.powi(tensor.order() as i32 - 1) - 1.0) * frobenius_sq(tensor)
}

/// Exact Rademacher trace variance divided by its bound, for the all-ones
/// tensor of order `N` and size `d`:
/// `(d^N − d² + d(d−1) 2^{N−1}) / (2 (d^N − d))`.
pub fn tightness_ratio_all_ones(order: usize, dim: usize) -> Result<f64> {
    if order < 2 {
        return Err(Error::InvalidArgument(format!("order must be >= 2, got {order}")));
    }
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension must be >= 2 (the bound vanishes at d = 1), got {dim}"
        )));
    }
    let d = dim as f64;
    let dn = d.powi(order as i32);
    let exact = dn - d * d + d * (d - 1.0) * 2f64.powi(order as i32 - 1);
    Ok(exact / (2.0 * (dn - d)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceTarget {
    Trace,
    Diagonal(usize),
}

impl fmt::Display for VarianceTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarianceTarget::Trace => f.write_str("trace"),
            VarianceTarget::Diagonal(i) => write!(f, "diag({i})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub target: VarianceTarget,
    pub dist: ProbeDistribution,
    pub fourth_moment: f64,
    pub exact: f64,
    pub upper_bound: Option<f64>,
    /// `exact / upper_bound` when the bound is present and nonzero.
    pub ratio: Option<f64>,
}

/// Exact variance plus the matching bound. The Rademacher diagonal has no
/// separate bound (its exact form is already closed).
pub fn variance_report(tensor: &DenseTensor, target: VarianceTarget, dist: ProbeDistribution) -> Result<VarianceReport> {
    let m4 = dist.fourth_moment();
    let (exact, upper_bound) = match target {
        VarianceTarget::Trace => {
            let upper = match dist {
                ProbeDistribution::Rademacher => trace_variance_upper_rademacher(tensor),
                ProbeDistribution::Gaussian => trace_variance_upper_gaussian(tensor),
            };
            (trace_variance_exact(tensor, m4)?, Some(upper))
        }
        VarianceTarget::Diagonal(i) => {
            let upper = match dist {
                ProbeDistribution::Rademacher => None,
                ProbeDistribution::Gaussian => Some(diag_variance_upper_gaussian(tensor, i)?),
            };
            (diag_variance_exact(tensor, i, m4)?, upper)
        }
    };
    let ratio = upper_bound.filter(|&u| u != 0.0).map(|u| exact / u);
    Ok(VarianceReport { target, dist, fourth_moment: m4, exact, upper_bound, ratio })
}

/// Exact moments of the estimators under Rademacher probes, by averaging over
/// every one of the `2^{d(N-1)}` equally likely sign patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedMoments {
    pub diag_mean: Vec<f64>,
    pub diag_var: Vec<f64>,
    /// Full `d × d` covariance of `y` (variances on the diagonal).
    pub diag_cov: Vec<Vec<f64>>,
    pub trace_mean: f64,
    pub trace_var: f64,
}

const ENUM_CHUNK: u64 = 1 << 12;

fn sign_pattern_estimate(tensor: &DenseTensor, pattern: u64) -> Vec<f64> {
    let d = tensor.dim();
    let probes: Vec<Vec<f64>> = (0..tensor.order() - 1)
        .map(|t| {
            (0..d)
                .map(|i| if pattern >> (t * d + i) & 1 == 1 { -1.0 } else { 1.0 })
                .collect()
        })
        .collect();
    let fiber = tensor.contract_unchecked(&probes);
    let combined: Vec<f64> = (0..d)
        .map(|i| probes.iter().map(|g| g[i]).product::<f64>())
        .collect();
    fiber.iter().zip(&combined).map(|(v, g)| v * g).collect()
}

/// Reduces `f` over `0..total` in fixed chunks, combined in chunk order.
fn chunked_sum<F>(total: u64, width: usize, f: F) -> Vec<f64>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let n_chunks = total.div_ceil(ENUM_CHUNK);
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            for pattern in c * ENUM_CHUNK..((c + 1) * ENUM_CHUNK).min(total) {
                f(pattern, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; width];
    for p in partials {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    out
}

pub fn enumerate_rademacher_exact(tensor: &DenseTensor) -> Result<EnumeratedMoments> {
    let d = tensor.dim();
    let bits = d * (tensor.order() - 1);
    if bits > ENUMERATION_BUDGET_LOG2 {
        return Err(Error::Budget { patterns_log2: bits, budget_log2: ENUMERATION_BUDGET_LOG2 });
    }
    let total = 1u64 << bits;
    let scale = 1.0 / total as f64;

    let diag_mean: Vec<f64> = chunked_sum(total, d, |pattern, acc| {
        for (a, y) in acc.iter_mut().zip(sign_pattern_estimate(tensor, pattern)) {
            *a += y;
        }
    })
    .into_iter()
    .map(|s| s * scale)
    .collect();

    let trace_mean = pairwise_sum(&diag_mean);
    // Central second moments: d×d covariance followed by the trace variance.
    let central = chunked_sum(total, d * d + 1, |pattern, acc| {
        let y = sign_pattern_estimate(tensor, pattern);
        let dev: Vec<f64> = y.iter().zip(&diag_mean).map(|(a, m)| a - m).collect();
        for p in 0..d {
            for q in 0..d {
                acc[p * d + q] += dev[p] * dev[q];
            }
        }
        acc[d * d] += (pairwise_sum(&y) - trace_mean).powi(2);
    });

    let diag_cov: Vec<Vec<f64>> = (0..d)
        .map(|p| (0..d).map(|q| central[p * d + q] * scale).collect())
        .collect();
    let diag_var = (0..d).map(|p| diag_cov[p][p]).collect();
    Ok(EnumeratedMoments { diag_mean, diag_var, diag_cov, trace_mean, trace_var: central[d * d] * scale })
}

/// Sample moments of the estimators from `n_samples` random queries.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloMoments {
    pub n_samples: usize,
    pub trace_mean: f64,
    /// Unbiased sample variance.
    pub trace_var: f64,
    /// Estimated standard error of `trace_var` relative to itself,
    /// `sqrt((κ − 1) / n)` with `κ` the sample kurtosis.
    pub trace_var_rel_se: f64,
    pub diag_mean: Vec<f64>,
    pub diag_var: Vec<f64>,
}

pub fn monte_carlo_moments(
    oracle: &dyn TensorOracle,
    dist: ProbeDistribution,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloMoments> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("Monte Carlo moments need at least 2 samples".into()));
    }
    let (trace, diag) = run_joint_samples(oracle, dist, n_samples, seed, 0)?;
    let xs = trace.trace_samples().expect("trace series");
    let trace_mean = mean(&xs);
    let trace_var = sample_variance(&xs);
    let m4 = pairwise_sum_by(xs.len(), &|i| (xs[i] - trace_mean).powi(4)) / xs.len() as f64;
    let kurtosis = if trace_var > 0.0 { m4 / (trace_var * trace_var) } else { 1.0 };
    let (diag_mean, diag_var) = (0..oracle.dim())
        .map(|i| {
            let col = diag.entry_samples(i);
            (mean(&col), sample_variance(&col))
        })
        .unzip();
    Ok(MonteCarloMoments {
        n_samples,
        trace_mean,
        trace_var,
        trace_var_rel_se: ((kurtosis - 1.0).max(0.0) / n_samples as f64).sqrt(),
        diag_mean,
        diag_var,
    })
}
