//! Tensor backends and the query-only access model.
//!
//! A [`DenseTensor`] stores all `d^N` entries with the last index varying
//! fastest, so `(i_1, ..., i_N)` lives at `Σ_n i_n d^{N-n}` and the mode-N
//! fiber of every contraction output is contiguous. A [`CpTensor`] stores a
//! rank-R sum of outer products and answers contractions in `O(R N d)`.
//!
//! Estimators never see entries directly; they go through a [`TensorOracle`],
//! whose only data access is [`TensorOracle::contract_all_but_last`].

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::numeric::{dot, pairwise_sum, sum_sq, weighted_block_sum};

/// `d^n`, or `None` on overflow.
pub fn checked_pow(d: usize, n: usize) -> Option<usize> {
    (0..n).try_fold(1usize, |acc, _| acc.checked_mul(d))
}

fn validate_shape(order: usize, dim: usize) -> Result<usize> {
    if order < 2 {
        return Err(Error::Shape(format!("tensor order must be >= 2, got {order}")));
    }
    if dim < 1 {
        return Err(Error::Shape("tensor dimension must be >= 1".into()));
    }
    checked_pow(dim, order)
        .ok_or_else(|| Error::Shape(format!("d^N overflows for N={order}, d={dim}")))
}

/// Explicit cubical tensor of order `N >= 2` and mode size `d >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    order: usize,
    dim: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(order: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        let len = validate_shape(order, dim)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "expected {len} entries for N={order}, d={dim}, got {}",
                data.len()
            )));
        }
        Ok(Self { order, dim, data })
    }

    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        let len = validate_shape(order, dim)?;
        Ok(Self { order, dim, data: vec![0.0; len] })
    }

    /// Builds a tensor from a function of the multi-index.
    pub fn from_fn<F: FnMut(&[usize]) -> f64>(order: usize, dim: usize, mut f: F) -> Result<Self> {
        let len = validate_shape(order, dim)?;
        let mut idx = vec![0usize; order];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment_index(&mut idx, dim);
        }
        Ok(Self { order, dim, data })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    /// Flat offset between consecutive diagonal entries: `Σ_{k<N} d^k`.
    pub fn diagonal_stride(&self) -> usize {
        (0..self.order).fold(0, |acc, _| acc * self.dim + 1)
    }

    /// Reads `a_{i,...,i}` directly from storage (not a query).
    pub fn diagonal_entry(&self, i: usize) -> f64 {
        self.data[i * self.diagonal_stride()]
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.diagonal_entry(i)).collect()
    }

    pub fn is_diagonal_flat_index(&self, flat: usize) -> bool {
        flat % self.diagonal_stride() == 0
    }

    /// The `d^{N-1}` entries `a_{j_1,...,j_{N-1},i}` of the slice ending at `i`,
    /// ordered by the row-major index of `(j_1, ..., j_{N-1})`.
    pub fn last_mode_slice(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(i).step_by(self.dim).copied()
    }
}

/// Advances a row-major multi-index (last position fastest).
pub fn increment_index(idx: &mut [usize], dim: usize) {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < dim {
            return;
        }
        *slot = 0;
    }
}

/// Rank-R canonical polyadic tensor `Σ_r λ_r u_r^(1) ∘ ... ∘ u_r^(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpTensor {
    order: usize,
    dim: usize,
    weights: Vec<f64>,
    /// `factors[n][r]` is `u_r^(n+1)`.
    factors: Vec<Vec<Vec<f64>>>,
}

impl CpTensor {
    pub fn new(order: usize, dim: usize, weights: Vec<f64>, factors: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if order < 2 {
            return Err(Error::Shape(format!("tensor order must be >= 2, got {order}")));
        }
        if dim < 1 {
            return Err(Error::Shape("tensor dimension must be >= 1".into()));
        }
        let rank = weights.len();
        if rank < 1 {
            return Err(Error::Shape("CP rank must be >= 1".into()));
        }
        if factors.len() != order {
            return Err(Error::Shape(format!(
                "expected factors for {order} modes, got {}",
                factors.len()
            )));
        }
        for (n, mode) in factors.iter().enumerate() {
            if mode.len() != rank {
                return Err(Error::Shape(format!(
                    "mode {n} has {} factor vectors, expected {rank}",
                    mode.len()
                )));
            }
            if let Some(bad) = mode.iter().find(|u| u.len() != dim) {
                return Err(Error::Shape(format!(
                    "mode {n} factor has length {}, expected {dim}",
                    bad.len()
                )));
            }
        }
        Ok(Self { order, dim, weights, factors })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factor(&self, mode: usize, r: usize) -> &[f64] {
        &self.factors[mode][r]
    }

    pub fn densify(&self) -> Result<DenseTensor> {
        DenseTensor::from_fn(self.order, self.dim, |idx| {
            let terms: Vec<f64> = (0..self.rank())
                .map(|r| {
                    idx.iter()
                        .enumerate()
                        .fold(self.weights[r], |acc, (n, &i)| acc * self.factors[n][r][i])
                })
                .collect();
            pairwise_sum(&terms)
        })
    }
}

/// Storage backends able to evaluate `A ×̄_1 g^(1) ⋯ ×̄_{N-1} g^(N-1)`.
///
/// `contract_unchecked` may assume the probes were validated by the caller.
pub trait Contraction: Send + Sync {
    fn order(&self) -> usize;
    fn dim(&self) -> usize;
    fn contract_unchecked(&self, probes: &[Vec<f64>]) -> Vec<f64>;
}

impl Contraction for DenseTensor {
    fn order(&self) -> usize {
        self.order
    }

    fn dim(&self) -> usize {
        self.dim
    }

    /// Successive single-mode contractions, peeling mode 1 first.
    fn contract_unchecked(&self, probes: &[Vec<f64>]) -> Vec<f64> {
        let mut probes = probes.iter();
        let Some(first) = probes.next() else {
            return self.data.clone();
        };
        let mut current = weighted_block_sum(&self.data, first, self.data.len() / self.dim);
        for g in probes {
            let block = current.len() / self.dim;
            current = weighted_block_sum(&current, g, block);
        }
        current
    }
}

impl Contraction for CpTensor {
    fn order(&self) -> usize {
        self.order
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn contract_unchecked(&self, probes: &[Vec<f64>]) -> Vec<f64> {
        let last = self.order - 1;
        let mut out = vec![0.0; self.dim];
        for r in 0..self.rank() {
            let coef = probes
                .iter()
                .enumerate()
                .fold(self.weights[r], |acc, (t, g)| acc * dot(&self.factors[t][r], g));
            for (o, &u) in out.iter_mut().zip(&self.factors[last][r]) {
                *o += coef * u;
            }
        }
        out
    }
}

/// Query-only view of a tensor.
pub trait TensorOracle: Sync {
    fn order(&self) -> usize;
    fn dim(&self) -> usize;
    /// `result[i] = Σ_{j_1..j_{N-1}} a_{j_1,...,j_{N-1},i} Π_t probes[t][j_t]`.
    fn contract_all_but_last(&self, probes: &[Vec<f64>]) -> Result<Vec<f64>>;
    /// Number of `contract_all_but_last` calls made so far.
    fn query_count(&self) -> u64;
}

/// Wraps a [`Contraction`] backend with probe validation and a query counter.
#[derive(Debug)]
pub struct QueryOracle<B> {
    backend: B,
    queries: AtomicU64,
}

impl<B: Contraction> QueryOracle<B> {
    pub fn new(backend: B) -> Self {
        Self { backend, queries: AtomicU64::new(0) }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn into_inner(self) -> B {
        self.backend
    }

    pub fn reset_count(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }
}

pub(crate) fn check_probes(order: usize, dim: usize, probes: &[Vec<f64>]) -> Result<()> {
    if probes.len() + 1 != order {
        return Err(Error::Shape(format!(
            "order-{order} tensor needs {} probe vectors, got {}",
            order - 1,
            probes.len()
        )));
    }
    if let Some((t, g)) = probes.iter().enumerate().find(|(_, g)| g.len() != dim) {
        return Err(Error::Shape(format!(
            "probe {t} has length {}, tensor dimension is {dim}",
            g.len()
        )));
    }
    Ok(())
}

impl<B: Contraction> TensorOracle for QueryOracle<B> {
    fn order(&self) -> usize {
        self.backend.order()
    }

    fn dim(&self) -> usize {
        self.backend.dim()
    }

    fn contract_all_but_last(&self, probes: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_probes(self.order(), self.dim(), probes)?;
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(self.backend.contract_unchecked(probes))
    }

    fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

/// Elementwise product of equal-length vectors.
pub fn hadamard(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (first, rest) = vectors
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("hadamard of an empty list".into()))?;
    let mut out = first.clone();
    for v in rest {
        if v.len() != out.len() {
            return Err(Error::Shape(format!(
                "hadamard length mismatch: {} vs {}",
                v.len(),
                out.len()
            )));
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o *= x;
        }
    }
    Ok(out)
}

/// Diagonal via `d` basis queries: `diag = Σ_i e_i * (A ×̄_1 e_i ⋯ ×̄_{N-1} e_i)`.
pub fn exact_diagonal(oracle: &dyn TensorOracle) -> Result<Vec<f64>> {
    let (order, dim) = (oracle.order(), oracle.dim());
    let mut diag = Vec::with_capacity(dim);
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        let probes = vec![e; order - 1];
        let fiber = oracle.contract_all_but_last(&probes)?;
        diag.push(fiber[i]);
    }
    Ok(diag)
}

pub fn exact_trace(oracle: &dyn TensorOracle) -> Result<f64> {
    Ok(pairwise_sum(&exact_diagonal(oracle)?))
}

/// `‖A‖_F²`.
pub fn frobenius_sq(tensor: &DenseTensor) -> f64 {
    sum_sq(&tensor.data)
}

/// `Σ_j a_{j,...,j}²`.
pub fn diag_sumsq(tensor: &DenseTensor) -> f64 {
    sum_sq(&tensor.diagonal_entries())
}

/// Diagonal mass ratio `α = Σ_j a_{j,...,j}² / ‖A‖_F²`.
pub fn alpha_ratio(tensor: &DenseTensor) -> Result<f64> {
    let fro = frobenius_sq(tensor);
    if fro == 0.0 {
        return Err(Error::Numeric("alpha ratio undefined for the zero tensor".into()));
    }
    Ok(diag_sumsq(tensor) / fro)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym2() -> DenseTensor {
        DenseTensor::new(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap()
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        assert!(DenseTensor::new(1, 3, vec![0.0; 3]).is_err());
        assert!(DenseTensor::new(2, 2, vec![0.0; 3]).is_err());
        assert!(DenseTensor::new(2, 0, vec![]).is_err());
        let t = DenseTensor::new(3, 1, vec![4.5]).unwrap();
        assert_eq!(exact_trace(&QueryOracle::new(t)).unwrap(), 4.5);
    }

    #[test]
    fn matrix_contraction_by_hand() {
        let oracle = QueryOracle::new(sym2());
        let out = oracle.contract_all_but_last(&[vec![1.0, -1.0]]).unwrap();
        assert_eq!(out, vec![1.0, -2.0]);
        assert_eq!(oracle.query_count(), 1);
    }

    #[test]
    fn zero_probes_give_zero() {
        let t = DenseTensor::from_fn(3, 3, |idx| (idx[0] + 2 * idx[1] + 3 * idx[2]) as f64).unwrap();
        let out = t.contract_unchecked(&[vec![0.0; 3], vec![0.0; 3]]);
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn cp_orthogonal_probe_gives_zero() {
        let u = vec![vec![1.0, 1.0]];
        let cp = CpTensor::new(3, 2, vec![1.0], vec![u.clone(), u.clone(), u]).unwrap();
        let oracle = QueryOracle::new(cp);
        let g = vec![1.0, -1.0];
        assert_eq!(oracle.contract_all_but_last(&[g.clone(), g]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn probe_validation() {
        let oracle = QueryOracle::new(sym2());
        assert!(matches!(
            oracle.contract_all_but_last(&[vec![1.0, 1.0], vec![1.0, 1.0]]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(oracle.contract_all_but_last(&[vec![1.0]]), Err(Error::Shape(_))));
        assert_eq!(oracle.query_count(), 0);
    }

    #[test]
    fn hadamard_cases() {
        assert_eq!(hadamard(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(), vec![3.0, 8.0]);
        assert_eq!(hadamard(&[vec![5.0, -1.0]]).unwrap(), vec![5.0, -1.0]);
        assert_eq!(hadamard(&[vec![1.0, -1.0], vec![1.0, -1.0]]).unwrap(), vec![1.0, 1.0]);
        assert!(hadamard(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(hadamard(&[]).is_err());
    }

    #[test]
    fn exact_diagonal_and_trace() {
        let oracle = QueryOracle::new(sym2());
        assert_eq!(exact_diagonal(&oracle).unwrap(), vec![2.0, 3.0]);
        assert_eq!(oracle.query_count(), 2);
        assert_eq!(exact_trace(&oracle).unwrap(), 5.0);

        let ones = DenseTensor::new(3, 3, vec![1.0; 27]).unwrap();
        assert_eq!(exact_diagonal(&QueryOracle::new(ones)).unwrap(), vec![1.0; 3]);
        let ones4 = DenseTensor::new(4, 5, vec![1.0; 625]).unwrap();
        assert_eq!(exact_trace(&QueryOracle::new(ones4)).unwrap(), 5.0);
    }

    #[test]
    fn cp_rank_one_diagonal() {
        let u = vec![vec![1.0, 2.0]];
        let cp = CpTensor::new(3, 2, vec![2.0], vec![u.clone(), u.clone(), u]).unwrap();
        let oracle = QueryOracle::new(cp);
        assert_eq!(exact_diagonal(&oracle).unwrap(), vec![2.0, 16.0]);
        assert_eq!(exact_trace(&oracle).unwrap(), 18.0);
    }

    #[test]
    fn scalar_statistics() {
        let a = sym2();
        assert_eq!(frobenius_sq(&a), 15.0);
        assert_eq!(diag_sumsq(&a), 13.0);
        assert_eq!(alpha_ratio(&a).unwrap(), 13.0 / 15.0);

        let ones = DenseTensor::new(3, 3, vec![1.0; 27]).unwrap();
        assert_eq!(frobenius_sq(&ones), 27.0);
        assert_eq!(diag_sumsq(&ones), 3.0);
        assert!((alpha_ratio(&ones).unwrap() - 1.0 / 9.0).abs() < 1e-15);

        let eye = DenseTensor::from_fn(2, 4, |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(alpha_ratio(&eye).unwrap(), 1.0);

        assert!(matches!(alpha_ratio(&DenseTensor::zeros(2, 3).unwrap()), Err(Error::Numeric(_))));
    }

    #[test]
    fn cp_shape_validation() {
        let u = vec![vec![1.0, 2.0]];
        assert!(CpTensor::new(3, 2, vec![1.0], vec![u.clone(), u.clone()]).is_err());
        assert!(CpTensor::new(2, 3, vec![1.0], vec![u.clone(), u]).is_err());
        assert!(CpTensor::new(2, 2, vec![], vec![vec![], vec![]]).is_err());
    }

    #[test]
    fn diagonal_stride_addresses_diagonal() {
        let t = DenseTensor::from_fn(3, 4, |idx| {
            if idx.iter().all(|&i| i == idx[0]) { 10.0 + idx[0] as f64 } else { 0.0 }
        })
        .unwrap();
        assert_eq!(t.diagonal_entries(), vec![10.0, 11.0, 12.0, 13.0]);
        assert_eq!(t.diagonal_stride(), 21);
    }
}
