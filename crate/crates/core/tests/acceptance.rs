//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use tentrace::analysis::{
    diag_covariance_exact, diag_variance_exact, diag_variance_upper_gaussian, enumerate_rademacher_exact,
    monte_carlo_moments, tightness_ratio_all_ones, trace_variance_exact, trace_variance_upper_gaussian,
    trace_variance_upper_rademacher,
};
use tentrace::estimators::{aggregate_median_of_means, estimate_trace_once, run_samples};
use tentrace::experiment::{mare_table, run_mare_experiment, ErrorTarget, ExperimentConfig, OutputFormat, ResultRow};
use tentrace::probes::SplitMix64;
use tentrace::synth::gaussian_dense;
use tentrace::tensor::{diag_sumsq, exact_diagonal, exact_trace, frobenius_sq};
use tentrace::{sample_probe_set, DenseTensor, EstimateKind, ProbeDistribution, QueryOracle};

struct Outcome {
    pass: bool,
    detail: String,
}

/// 50 tensors with d ≤ 3 and N ∈ {2, 3, 4}.
fn small_tensors() -> Vec<DenseTensor> {
    (0..50u64).map(|k| gaussian_dense(2 + (k % 3) as usize, 1 + ((k / 3) % 3) as usize, 0xACCE_5500 + k).unwrap()).collect()
}

fn unbiasedness(tensors: &[DenseTensor]) -> Outcome {
    let mut worst = 0.0f64;
    for t in tensors {
        let oracle = QueryOracle::new(t.clone());
        let m = enumerate_rademacher_exact(t).unwrap();
        for (a, b) in m.diag_mean.iter().zip(exact_diagonal(&oracle).unwrap()) {
            worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        }
        let tr = exact_trace(&oracle).unwrap();
        worst = worst.max((m.trace_mean - tr).abs() / (1.0 + tr.abs()));
    }
    Outcome { pass: worst <= 1e-10, detail: format!("{} tensors, worst scaled deviation {worst:.2e}", tensors.len()) }
}

fn variance_formulas(tensors: &[DenseTensor]) -> Outcome {
    let (mut worst, mut checks) = (0.0f64, 0);
    let mut note = |a: f64, b: f64| {
        worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        checks += 1;
    };
    for t in tensors {
        let m = enumerate_rademacher_exact(t).unwrap();
        let d = t.dim();
        for p in 0..d {
            note(diag_variance_exact(t, p, 1.0).unwrap(), m.diag_var[p]);
            for q in (0..d).filter(|&q| q != p) {
                note(diag_covariance_exact(t, p, q).unwrap(), m.diag_cov[p][q]);
            }
        }
        note(trace_variance_exact(t, 1.0).unwrap(), m.trace_var);
    }
    Outcome { pass: worst <= 1e-9, detail: format!("{checks} moments, worst scaled deviation {worst:.2e}") }
}

fn gaussian_variance() -> (Outcome, Vec<DenseTensor>) {
    let tensors: Vec<DenseTensor> = (0..5).map(|k| gaussian_dense(3, 10, 0x6A55 + k).unwrap()).collect();
    let mut worst = 0.0f64;
    for (k, t) in tensors.iter().enumerate() {
        let exact = trace_variance_exact(t, 3.0).unwrap();
        let mc = monte_carlo_moments(&QueryOracle::new(t.clone()), ProbeDistribution::Gaussian, 200_000, 900 + k as u64)
            .unwrap();
        worst = worst.max((mc.trace_var - exact).abs() / exact);
    }
    (Outcome { pass: worst <= 0.05, detail: format!("5 tensors, worst relative gap {:.2}%", 100.0 * worst) }, tensors)
}

fn hutchinson() -> (Outcome, Vec<DenseTensor>) {
    let mut rng = SplitMix64::new(0x4875_7463);
    let mut worst_var = 0.0f64;
    let mut worst_quad = 0.0f64;
    let mut mats = Vec::new();
    for k in 0..100 {
        let d = 2 + k % 9;
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let x = rng.next_normal();
                a[i * d + j] = x;
                a[j * d + i] = x;
            }
        }
        let t = DenseTensor::new(2, d, a.clone()).unwrap();
        let identity = 2.0 * (frobenius_sq(&t) - diag_sumsq(&t));
        let exact = trace_variance_exact(&t, 1.0).unwrap();
        worst_var = worst_var.max((exact - identity).abs() / (1.0 + identity));

        let oracle = QueryOracle::new(t.clone());
        for dist in ProbeDistribution::ALL {
            let g = sample_probe_set(dist, d, 1, k as u64).unwrap();
            let v = &g.probes[0];
            let quad: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| v[i] * a[i * d + j] * v[j]).sum();
            let est = estimate_trace_once(&oracle, &g).unwrap();
            worst_quad = worst_quad.max((est - quad).abs() / (1.0 + quad.abs()));
        }
        mats.push(t);
    }
    (
        Outcome {
            pass: worst_var <= 1e-10 && worst_quad <= 1e-10,
            detail: format!("100 matrices, variance identity gap {worst_var:.2e}, g'Ag gap {worst_quad:.2e}"),
        },
        mats,
    )
}

fn tightness() -> Outcome {
    let ones_at_two = (2..=100).all(|d| (tightness_ratio_all_ones(2, d).unwrap() - 1.0).abs() <= 1e-12);
    let r33 = tightness_ratio_all_ones(3, 3).unwrap();
    let decreasing = [3usize, 4, 5].iter().all(|&n| {
        let r: Vec<f64> = (3..=100).map(|d| tightness_ratio_all_ones(n, d).unwrap()).collect();
        r.windows(2).all(|w| w[1] < w[0])
    });
    Outcome {
        pass: ones_at_two && (r33 - 0.875).abs() <= 1e-12 && decreasing,
        detail: format!("N=2 all ones: {ones_at_two}; (3,3) = {r33}; strictly decreasing for N=3,4,5: {decreasing}"),
    }
}

fn domination(groups: &[&[DenseTensor]]) -> Outcome {
    let (mut worst, mut checks) = (f64::INFINITY, 0);
    let mut note = |upper: f64, exact: f64| {
        worst = worst.min((upper - exact) / (1.0 + exact.abs()));
        checks += 1;
    };
    for t in groups.iter().flat_map(|g| g.iter()) {
        note(trace_variance_upper_rademacher(t), trace_variance_exact(t, 1.0).unwrap());
        note(trace_variance_upper_gaussian(t), trace_variance_exact(t, 3.0).unwrap());
        for i in 0..t.dim() {
            note(diag_variance_upper_gaussian(t, i).unwrap(), diag_variance_exact(t, i, 3.0).unwrap());
        }
    }
    Outcome { pass: worst >= -1e-9, detail: format!("{checks} bound/exact pairs, smallest scaled margin {worst:.3e}") }
}

fn mare(rows: &[ResultRow], n: usize, alpha: f64, dist: ProbeDistribution, k: usize, trace: bool) -> f64 {
    rows.iter()
        .find(|r| {
            r.order == n && r.alpha == alpha && r.dist == dist && r.k == k && matches!(r.target, ErrorTarget::Trace) == trace
        })
        .expect("grid cell present")
        .mare
}

fn mare_grid(config: &ExperimentConfig, rows: &[ResultRow]) -> Vec<Outcome> {
    use ProbeDistribution::{Gaussian, Rademacher};
    let k_max = *config.ks.last().unwrap();
    let k_min = config.ks[0];

    let mut cells = 0;
    let mut rad_wins = 0;
    for &n in &config.orders {
        for &a in &config.alphas {
            for &k in &config.ks {
                for trace in [true, false] {
                    cells += 1;
                    rad_wins += usize::from(mare(rows, n, a, Rademacher, k, trace) <= mare(rows, n, a, Gaussian, k, trace));
                }
            }
        }
    }
    let a_frac = rad_wins as f64 / cells as f64;

    let al = &config.alphas;
    let mut alpha_pairs: Vec<(f64, f64)> = al.windows(2).map(|w| (w[0], w[1])).collect();
    alpha_pairs.push((al[0], al[al.len() - 1]));
    let (mut b_ok, mut b_total) = (0, 0);
    for &n in &config.orders {
        for &(lo, hi) in &alpha_pairs {
            b_total += 1;
            b_ok += usize::from(mare(rows, n, hi, Rademacher, k_max, true) < mare(rows, n, lo, Rademacher, k_max, true));
        }
    }

    let (mut c_ok, mut c_total) = (0, 0);
    for &a in al {
        for (n_lo, n_hi) in [(2, 3), (3, 4), (2, 4)] {
            c_total += 1;
            c_ok += usize::from(mare(rows, n_hi, a, Gaussian, k_max, true) > mare(rows, n_lo, a, Gaussian, k_max, true));
        }
    }

    let (mut d_ok, mut d_total) = (0, 0);
    for &n in &config.orders {
        for &a in al {
            for dist in [Rademacher, Gaussian] {
                for trace in [true, false] {
                    d_total += 1;
                    d_ok += usize::from(mare(rows, n, a, dist, k_max, trace) < mare(rows, n, a, dist, k_min, trace));
                }
            }
        }
    }

    vec![
        Outcome {
            pass: a_frac >= 0.9,
            detail: format!("(a) Rademacher MARE <= Gaussian MARE in {rad_wins}/{cells} cells ({:.1}%)", 100.0 * a_frac),
        },
        Outcome {
            pass: b_ok >= 10,
            detail: format!("(b) Rademacher trace MARE decreases with alpha at K={k_max}: {b_ok}/{b_total}"),
        },
        Outcome {
            pass: c_ok >= 10,
            detail: format!("(c) Gaussian trace MARE increases with N at K={k_max}: {c_ok}/{c_total}"),
        },
        Outcome {
            pass: d_ok == d_total,
            detail: format!("(d) MARE at K={k_max} below MARE at K={k_min}: {d_ok}/{d_total} cells"),
        },
    ]
}

fn median_of_means() -> Outcome {
    let t = gaussian_dense(3, 6, 0x303).unwrap();
    let sigma = trace_variance_exact(&t, 1.0).unwrap().sqrt();
    let oracle = QueryOracle::new(t);
    let tr = exact_trace(&oracle).unwrap();
    let (r, s) = (19usize, 20usize);
    let radius = 2.0 * sigma / (s as f64).sqrt();
    let hits = (0..100u64)
        .filter(|&rep| {
            let series = run_samples(&oracle, ProbeDistribution::Rademacher, r * s, 0x3030, rep, EstimateKind::Trace).unwrap();
            let mm = aggregate_median_of_means(&series.trace_samples().unwrap(), r).unwrap();
            (mm - tr).abs() <= radius
        })
        .count();
    Outcome { pass: hits >= 85, detail: format!("r=19, s={s}: {hits}/100 repetitions within 2 sigma/sqrt(s)") }
}

fn determinism(dir: &std::path::Path, in_process: &str) -> Outcome {
    let mut csvs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.join(format!("threads{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_tentrace"))
            .args(["--threads", threads, "experiment", "mare", "--out", out.to_str().unwrap()])
            .output()
            .expect("binary runs");
        if !status.status.success() {
            return Outcome { pass: false, detail: String::from_utf8_lossy(&status.stderr).into_owned() };
        }
        csvs.push(std::fs::read(out.join("mare.csv")).unwrap());
    }
    let same = csvs[0] == csvs[1];
    let matches_library = csvs[0] == in_process.as_bytes();
    Outcome {
        pass: same && matches_library,
        detail: format!(
            "--threads 1 vs 4 byte-identical: {same}; equal to in-process run: {matches_library} ({} bytes)",
            csvs[0].len()
        ),
    }
}

fn timed<T>(limit: Option<Duration>, f: impl FnOnce() -> T) -> (T, Duration, bool) {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    (v, took, limit.is_none_or(|l| took <= l))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: &str, o: Outcome, took: Duration, in_time: bool, limit: Option<Duration>| {
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit.map_or(String::new(), |l| format!(" (limit {}s)", l.as_secs()));
        println!("{} criterion {id}: {} [{:.1}s{budget}]", if pass { "PASS" } else { "FAIL" }, o.detail, took.as_secs_f64());
    };
    let secs = |s| Some(Duration::from_secs(s));

    let tensors = small_tensors();
    let (o, t, ok) = timed(secs(30), || unbiasedness(&tensors));
    report("1", o, t, ok, secs(30));
    let (o, t, ok) = timed(secs(60), || variance_formulas(&tensors));
    report("2", o, t, ok, secs(60));
    let ((o, gauss_tensors), t, ok) = timed(secs(120), gaussian_variance);
    report("3", o, t, ok, secs(120));
    let ((o, mats), t, ok) = timed(None, hutchinson);
    report("4", o, t, ok, None);
    let (o, t, ok) = timed(secs(1), tightness);
    report("5", o, t, ok, secs(1));
    let (o, t, ok) = timed(None, || domination(&[&tensors, &gauss_tensors, &mats]));
    report("6", o, t, ok, None);

    let config = ExperimentConfig::default();
    let (rows, t, ok) = timed(secs(600), || run_mare_experiment(&config).unwrap());
    for (o, sub) in mare_grid(&config, &rows).into_iter().zip(["a", "b", "c", "d"]) {
        report(&format!("7{sub}"), o, t, ok, secs(600));
    }

    let (o, t, ok) = timed(secs(60), median_of_means);
    report("8", o, t, ok, secs(60));

    let dir = tempfile::tempdir().unwrap();
    let table = mare_table(&rows, OutputFormat::Csv);
    let (o, t, ok) = timed(None, || determinism(dir.path(), &table));
    report("9", o, t, ok, None);

    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion line(s) failed");
        ExitCode::FAILURE
    }
}
