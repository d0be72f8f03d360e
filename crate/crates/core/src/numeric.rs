//! Summation helpers shared by the tensor and analysis code.
//!
//! All reductions use pairwise (tree) accumulation with a fixed block size so
//! the rounding pattern depends only on the input length.

const BLOCK: usize = 32;

/// Pairwise sum of a slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n`, without materializing the terms.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: &F) -> f64 {
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= BLOCK {
            return (lo..hi).map(f).sum();
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, f) + go(mid, hi, f)
    }
    go(0, n, f)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), &|i| a[i] * b[i])
}

pub fn sum_sq(a: &[f64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| a[i] * a[i])
}

/// `Σ_b weights[b] * data[b*len .. (b+1)*len]`, accumulated pairwise over `b`.
///
/// `data.len()` must equal `weights.len() * len`.
pub fn weighted_block_sum(data: &[f64], weights: &[f64], len: usize) -> Vec<f64> {
    debug_assert_eq!(data.len(), weights.len() * len);
    let mut out = vec![0.0; len];
    accumulate_blocks(data, weights, len, &mut out);
    out
}

fn accumulate_blocks(data: &[f64], weights: &[f64], len: usize, out: &mut [f64]) {
    const LEAF: usize = 8;
    let nb = weights.len();
    if nb <= LEAF {
        for (b, &w) in weights.iter().enumerate() {
            let block = &data[b * len..(b + 1) * len];
            for (o, &x) in out.iter_mut().zip(block) {
                *o += w * x;
            }
        }
        return;
    }
    let mid = nb / 2;
    accumulate_blocks(&data[..mid * len], &weights[..mid], len, out);
    let mut right = vec![0.0; len];
    accumulate_blocks(&data[mid * len..], &weights[mid..], len, &mut right);
    for (o, r) in out.iter_mut().zip(right) {
        *o += r;
    }
}

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample variance (two-pass). Requires at least two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    pairwise_sum_by(values.len(), &|i| (values[i] - m).powi(2)) / (values.len() - 1) as f64
}

/// Median with the even-length convention of averaging the two middle values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Quantile by linear interpolation between order statistics (type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
