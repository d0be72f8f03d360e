//! Monte Carlo checks. Tolerances are multiples of the estimated standard
//! error, so each test fails with negligible probability on a fixed seed.

use tentrace::analysis::{monte_carlo_moments, trace_variance_exact};
use tentrace::estimators::{aggregate_median_of_means, run_samples};
use tentrace::numeric::{mean, sample_variance};
use tentrace::synth::{gaussian_dense, generate_with_alpha, GeneratorSpec};
use tentrace::tensor::exact_trace;
use tentrace::{sample_probe_set, EstimateKind, ProbeDistribution, QueryOracle};

#[test]
fn gaussian_trace_sample_mean_converges() {
    let t = gaussian_dense(3, 20, 5).unwrap();
    let sigma = trace_variance_exact(&t, 3.0).unwrap().sqrt();
    let oracle = QueryOracle::new(t);
    let k = 10_000;
    let series = run_samples(&oracle, ProbeDistribution::Gaussian, k, 77, 0, EstimateKind::Trace).unwrap();
    let tr = exact_trace(&oracle).unwrap();
    let err = (series.trace_samples().unwrap().iter().sum::<f64>() / k as f64 - tr).abs();
    assert!(err <= 4.0 * sigma / (k as f64).sqrt(), "err {err}, sigma {sigma}");
}

#[test]
fn rademacher_monte_carlo_variance_approaches_exact() {
    let t = gaussian_dense(3, 4, 11).unwrap();
    let exact = trace_variance_exact(&t, 1.0).unwrap();
    let mc = monte_carlo_moments(&QueryOracle::new(t), ProbeDistribution::Rademacher, 50_000, 3).unwrap();
    assert!((mc.trace_var - exact).abs() <= 4.0 * mc.trace_var_rel_se * exact, "{} vs {exact}", mc.trace_var);
}

#[test]
fn two_sample_variance_is_half_squared_difference() {
    let oracle = QueryOracle::new(gaussian_dense(2, 5, 8).unwrap());
    let mc = monte_carlo_moments(&oracle, ProbeDistribution::Gaussian, 2, 21).unwrap();
    let xs = run_samples(&oracle, ProbeDistribution::Gaussian, 2, 21, 0, EstimateKind::Trace)
        .unwrap()
        .trace_samples()
        .unwrap();
    assert!((mc.trace_var - (xs[0] - xs[1]).powi(2) / 2.0).abs() <= 1e-12 * (1.0 + mc.trace_var));
    assert!(monte_carlo_moments(&oracle, ProbeDistribution::Gaussian, 1, 21).is_err());
}

#[test]
fn probe_entries_have_the_right_moments() {
    let d = 100_000;
    let rad = sample_probe_set(ProbeDistribution::Rademacher, d, 1, 1).unwrap();
    assert!(mean(&rad.probes[0]).abs() <= 0.02);

    let gau = sample_probe_set(ProbeDistribution::Gaussian, d, 1, 2).unwrap();
    let g = &gau.probes[0];
    let m2 = g.iter().map(|x| x * x).sum::<f64>() / d as f64;
    let m4 = g.iter().map(|x| x.powi(4)).sum::<f64>() / d as f64;
    // Var(z²) = 2, Var(z⁴) = 96.
    assert!((m2 - 1.0).abs() <= 3.0 * (2.0 / d as f64).sqrt());
    assert!((m4 - 3.0).abs() <= 0.15);
}

#[test]
fn generator_does_not_bias_off_diagonal_entries() {
    let t = generate_with_alpha(&GeneratorSpec { order: 3, dim: 30, alpha: 0.4, seed: 9 }).unwrap();
    let off: Vec<f64> =
        t.data().iter().enumerate().filter(|(k, _)| !t.is_diagonal_flat_index(*k)).map(|(_, &x)| x).collect();
    let se = (sample_variance(&off) / off.len() as f64).sqrt();
    assert!(mean(&off).abs() <= 3.0 * se);
}

#[test]
fn median_of_means_resists_outliers() {
    let mut xs = vec![1.0; 90];
    xs.extend(std::iter::repeat_n(1e6, 9));
    xs.push(1.0);
    // Group of 10 each; the outliers land in a single group.
    assert_eq!(aggregate_median_of_means(&xs, 10).unwrap(), 1.0);
    assert!(mean(&xs) > 1e4);
}

#[test]
fn median_of_means_meets_its_guarantee() {
    use tentrace::analysis::trace_variance_exact as var;
    let t = gaussian_dense(3, 5, 41).unwrap();
    let sigma = var(&t, 1.0).unwrap().sqrt();
    let oracle = QueryOracle::new(t);
    let tr = exact_trace(&oracle).unwrap();
    // δ = 0.1: r = ⌈8 ln 10⌉ = 19 groups of s samples.
    let (r, s) = (tentrace::estimators::mom_groups(0.1) as usize, 12);
    assert_eq!(r, 19);
    let hits = (0..500u64)
        .filter(|&rep| {
            let xs = run_samples(&oracle, ProbeDistribution::Rademacher, r * s, 4242, rep, EstimateKind::Trace)
                .unwrap()
                .trace_samples()
                .unwrap();
            (aggregate_median_of_means(&xs, r).unwrap() - tr).abs() <= 2.0 * sigma / (s as f64).sqrt()
        })
        .count();
    assert!(hits >= 450, "{hits}/500");
}
