//! Synthetic tensors with a prescribed diagonal-mass ratio, plus fixtures.
//!
//! [`generate_with_alpha`] draws every entry i.i.d. `N(0, 1)` and rescales the
//! diagonal by `c = sqrt(α S_o / ((1 − α) S_d))`, where `S_d` and `S_o` are the
//! diagonal and off-diagonal sums of squares, so `α` is hit exactly up to
//! rounding. The diagonal is drawn from its own stream
//! (`derive_run_seed(seed, 0, 0)`) which does not depend on `N`; off-diagonal
//! entries come from `derive_run_seed(seed, 1, N)` in storage order. For a
//! fixed seed, tensors of different `α` therefore differ only in the diagonal
//! scale, and tensors of different order share the same unscaled diagonal.

use crate::error::{Error, Result};
use crate::probes::{derive_run_seed, SplitMix64};
use crate::tensor::{CpTensor, DenseTensor};

pub use crate::format::{read_tensor, write_tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub order: usize,
    pub dim: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(Error::InvalidArgument(format!("order must be >= 2, got {}", self.order)));
        }
        if self.dim < 2 {
            return Err(Error::InvalidArgument(format!("dimension must be >= 2, got {}", self.dim)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie strictly between 0 and 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

pub fn generate_with_alpha(spec: &GeneratorSpec) -> Result<DenseTensor> {
    spec.validate()?;
    let mut tensor = DenseTensor::zeros(spec.order, spec.dim)?;
    let stride = tensor.diagonal_stride();

    let mut diag_rng = SplitMix64::new(derive_run_seed(spec.seed, 0, 0));
    let mut off_rng = SplitMix64::new(derive_run_seed(spec.seed, 1, spec.order as u64));
    let mut s_diag = 0.0;
    let mut s_off = 0.0;
    for (flat, x) in tensor.data_mut().iter_mut().enumerate() {
        if flat % stride == 0 {
            let mut z = diag_rng.next_normal();
            // Relative errors divide by the diagonal entry.
            while z == 0.0 {
                z = diag_rng.next_normal();
            }
            *x = z;
            s_diag += z * z;
        } else {
            let z = off_rng.next_normal();
            *x = z;
            s_off += z * z;
        }
    }
    if s_off == 0.0 {
        return Err(Error::Numeric("off-diagonal mass is zero; cannot set alpha".into()));
    }
    let c = (spec.alpha * s_off / ((1.0 - spec.alpha) * s_diag)).sqrt();
    for x in tensor.data_mut().iter_mut().step_by(stride) {
        *x *= c;
    }
    Ok(tensor)
}

pub fn all_ones(order: usize, dim: usize) -> Result<DenseTensor> {
    DenseTensor::from_fn(order, dim, |_| 1.0)
}

/// Ones on the superdiagonal `a_{i,...,i}`, zeros elsewhere.
pub fn identity_like(order: usize, dim: usize) -> Result<DenseTensor> {
    DenseTensor::from_fn(order, dim, |idx| {
        if idx.iter().all(|&i| i == idx[0]) {
            1.0
        } else {
            0.0
        }
    })
}

/// Dense tensor with i.i.d. `N(0, 1)` entries in storage order.
pub fn gaussian_dense(order: usize, dim: usize, seed: u64) -> Result<DenseTensor> {
    let mut rng = SplitMix64::new(seed);
    DenseTensor::from_fn(order, dim, |_| rng.next_normal())
}

/// Rank-R CP tensor with i.i.d. `N(0, 1)` weights and factor entries.
pub fn random_cp(order: usize, dim: usize, rank: usize, seed: u64) -> Result<CpTensor> {
    let mut rng = SplitMix64::new(seed);
    let weights = (0..rank).map(|_| rng.next_normal()).collect();
    let factors = (0..order)
        .map(|_| (0..rank).map(|_| (0..dim).map(|_| rng.next_normal()).collect()).collect())
        .collect();
    CpTensor::new(order, dim, weights, factors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::trace_variance_exact;
    use crate::tensor::{alpha_ratio, exact_trace, frobenius_sq, QueryOracle};

    #[test]
    fn hits_alpha() {
        let spec = GeneratorSpec { order: 3, dim: 20, alpha: 0.6, seed: 7 };
        let t = generate_with_alpha(&spec).unwrap();
        assert!((alpha_ratio(&t).unwrap() - 0.6).abs() < 1e-9);
        assert_eq!(t, generate_with_alpha(&spec).unwrap());
    }

    #[test]
    fn rescaling_off_diagonals_moves_alpha() {
        let mut t = generate_with_alpha(&GeneratorSpec { order: 3, dim: 6, alpha: 0.5, seed: 3 }).unwrap();
        let stride = t.diagonal_stride();
        for (flat, x) in t.data_mut().iter_mut().enumerate() {
            if flat % stride != 0 {
                *x *= 2.0;
            }
        }
        assert!((alpha_ratio(&t).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn alpha_only_scales_the_diagonal() {
        let a = generate_with_alpha(&GeneratorSpec { order: 3, dim: 5, alpha: 0.2, seed: 1 }).unwrap();
        let b = generate_with_alpha(&GeneratorSpec { order: 3, dim: 5, alpha: 0.8, seed: 1 }).unwrap();
        let stride = a.diagonal_stride();
        for (flat, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
            if flat % stride != 0 {
                assert_eq!(x, y);
            }
        }
        let ratio = b.diagonal_entry(0) / a.diagonal_entry(0);
        for i in 1..5 {
            assert!((b.diagonal_entry(i) / a.diagonal_entry(i) - ratio).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_degenerate_specs() {
        for (order, dim, alpha) in [(3, 5, 0.0), (3, 5, 1.0), (1, 5, 0.5), (3, 1, 0.5), (3, 5, f64::NAN)] {
            assert!(generate_with_alpha(&GeneratorSpec { order, dim, alpha, seed: 0 }).is_err());
        }
    }

    #[test]
    fn fixtures() {
        assert_eq!(frobenius_sq(&all_ones(3, 3).unwrap()), 27.0);
        assert_eq!(exact_trace(&QueryOracle::new(identity_like(4, 5).unwrap())).unwrap(), 5.0);
        assert_eq!(alpha_ratio(&identity_like(3, 4).unwrap()).unwrap(), 1.0);
        assert_eq!(trace_variance_exact(&all_ones(2, 2).unwrap(), 1.0).unwrap(), 4.0);
    }
}
