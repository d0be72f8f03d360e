//! Synthetic experiments: MARE vs. number of samples over an (N, α) grid, and
//! the closed-form tightness sweep for all-ones tensors.
//!
//! Seeding of the MARE grid, all through [`derive_run_seed`]:
//!
//! * tensor seed `derive_run_seed(base, u64::MAX, 0)`, shared by every cell
//!   (see [`crate::synth`] for how α and N enter the generator);
//! * cell seed `derive_run_seed(base, N, alpha_index)`;
//! * diagonal index drawn from `SplitMix64(derive_run_seed(cell, 0, 0))`;
//! * probe base for distribution `t` is `derive_run_seed(cell, 1, t)`, and
//!   sample `k` of run `r` uses `derive_run_seed(probe_base, r, k)`.
//!
//! Each run draws `max(Ks)` samples; the estimate at `K` is the mean of the
//! first `K` of them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::run_joint_samples;
use crate::numeric::{mean, pairwise_sum, quantile_sorted};
use crate::plot::{LineChart, Series};
use crate::probes::{derive_run_seed, parse_seed, ProbeDistribution, SplitMix64};
use crate::synth::{generate_with_alpha, GeneratorSpec};
use crate::tensor::{checked_pow, DenseTensor, QueryOracle};

/// Dense tensors above this many entries need `allow_huge`.
pub const HUGE_ENTRIES: usize = 50_000_000;

/// Diagonal magnitudes below this are scored with absolute error.
pub const TINY_TARGET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagIndexPolicy {
    RandomPerTensor,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Tsv,
}

impl OutputFormat {
    pub fn separator(self) -> char {
        match self {
            OutputFormat::Csv => ',',
            OutputFormat::Tsv => '\t',
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Tsv => "tsv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub orders: Vec<usize>,
    pub alphas: Vec<f64>,
    pub dists: Vec<ProbeDistribution>,
    pub ks: Vec<usize>,
    pub runs: usize,
    pub dim: usize,
    pub base_seed: u64,
    pub target_diag_index: DiagIndexPolicy,
    pub output_dir: Option<PathBuf>,
    pub allow_huge: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            orders: vec![2, 3, 4],
            alphas: vec![0.2, 0.4, 0.6, 0.8],
            dists: ProbeDistribution::ALL.to_vec(),
            ks: (1..=10).map(|k| 2 * k).collect(),
            runs: 100,
            dim: 30,
            base_seed: 20_240_601,
            target_diag_index: DiagIndexPolicy::RandomPerTensor,
            output_dir: None,
            allow_huge: false,
        }
    }
}

fn parse_list<T, F: Fn(&str) -> Result<T>>(value: &str, f: F) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad value {v:?} for {key}")))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.runs < 1 {
            return fail("runs must be >= 1".into());
        }
        if self.ks.is_empty() || self.ks[0] < 1 || self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("Ks must be a nonempty strictly ascending list of positive integers, got {:?}", self.ks));
        }
        if self.orders.is_empty() || self.alphas.is_empty() || self.dists.is_empty() {
            return fail("orders, alphas and dists must be nonempty".into());
        }
        if let DiagIndexPolicy::Fixed(i) = self.target_diag_index {
            if i >= self.dim {
                return fail(format!("diagonal index {i} out of range for dim {}", self.dim));
            }
        }
        for &order in &self.orders {
            for &alpha in &self.alphas {
                GeneratorSpec { order, dim: self.dim, alpha, seed: 0 }.validate()?;
            }
            let entries = checked_pow(self.dim, order).unwrap_or(usize::MAX);
            if entries > HUGE_ENTRIES && !self.allow_huge {
                return fail(format!(
                    "N={order}, d={} needs {entries} dense entries; pass allow_huge to proceed",
                    self.dim
                ));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. Keys: `orders`, `alphas`, `dists`, `ks`,
    /// `runs`, `dim`, `seed`, `diag_index` (`random` or an index),
    /// `output_dir`, `allow_huge`. `#` starts a comment.
    pub fn apply_key_values(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("config line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "orders" => self.orders = parse_list(value, |v| parse_num(key, v))?,
            "alphas" => self.alphas = parse_list(value, |v| parse_num(key, v))?,
            "dists" => self.dists = parse_list(value, str::parse)?,
            "ks" => self.ks = parse_list(value, |v| parse_num(key, v))?,
            "runs" => self.runs = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "seed" => self.base_seed = parse_seed(value)?,
            "diag_index" => {
                self.target_diag_index = match value {
                    "random" => DiagIndexPolicy::RandomPerTensor,
                    v => DiagIndexPolicy::Fixed(parse_num(key, v)?),
                }
            }
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "allow_huge" => self.allow_huge = parse_num(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorTarget {
    Trace,
    Diagonal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub order: usize,
    pub alpha: f64,
    pub dist: ProbeDistribution,
    pub k: usize,
    pub target: ErrorTarget,
    pub mare: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub runs: usize,
    pub seed: u64,
    /// True when the target magnitude was below [`TINY_TARGET`] and absolute
    /// errors were reported instead of relative ones.
    pub absolute: bool,
}

pub const MARE_HEADER: [&str; 13] =
    ["order", "alpha", "dist", "k", "target", "diag_index", "mare", "q1", "median", "q3", "runs", "seed", "error"];

impl ResultRow {
    fn fields(&self) -> Vec<String> {
        let (target, index) = match self.target {
            ErrorTarget::Trace => ("trace", String::new()),
            ErrorTarget::Diagonal(i) => ("diag", i.to_string()),
        };
        vec![
            self.order.to_string(),
            self.alpha.to_string(),
            self.dist.to_string(),
            self.k.to_string(),
            target.to_string(),
            index,
            self.mare.to_string(),
            self.q1.to_string(),
            self.median.to_string(),
            self.q3.to_string(),
            self.runs.to_string(),
            self.seed.to_string(),
            if self.absolute { "absolute" } else { "relative" }.to_string(),
        ]
    }
}

fn join_row<S: AsRef<str>>(fields: &[S], sep: char) -> String {
    let mut line = String::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            line.push(sep);
        }
        line.push_str(f.as_ref());
    }
    line.push('\n');
    line
}

pub fn mare_table(rows: &[ResultRow], format: OutputFormat) -> String {
    let sep = format.separator();
    let mut out = join_row(&MARE_HEADER, sep);
    for r in rows {
        out += &join_row(&r.fields(), sep);
    }
    out
}

/// Signed errors over runs for one (cell, distribution, K, target).
fn summarize(
    order: usize,
    alpha: f64,
    dist: ProbeDistribution,
    k: usize,
    target: ErrorTarget,
    truth: f64,
    estimates: &[f64],
    seed: u64,
) -> ResultRow {
    let absolute = truth.abs() < TINY_TARGET;
    let scale = if absolute { 1.0 } else { truth.abs() };
    let mut signed: Vec<f64> = estimates.iter().map(|e| (e - truth) / scale).collect();
    let abs: Vec<f64> = signed.iter().map(|e| e.abs()).collect();
    let mare = mean(&abs);
    signed.sort_by(f64::total_cmp);
    ResultRow {
        order,
        alpha,
        dist,
        k,
        target,
        mare,
        q1: quantile_sorted(&signed, 0.25),
        median: quantile_sorted(&signed, 0.5),
        q3: quantile_sorted(&signed, 0.75),
        runs: estimates.len(),
        seed,
        absolute,
    }
}

/// One grid cell on an explicit tensor.
pub struct CellSpec<'a> {
    pub tensor: &'a DenseTensor,
    pub alpha: f64,
    pub diag_index: usize,
    pub cell_seed: u64,
}

/// Rows for one tensor, every distribution, every K, trace then diagonal.
pub fn run_mare_cell(
    cell: &CellSpec<'_>,
    dists: &[ProbeDistribution],
    ks: &[usize],
    runs: usize,
) -> Result<Vec<ResultRow>> {
    let tensor = cell.tensor;
    let oracle = QueryOracle::new(tensor.clone());
    let diagonal = tensor.diagonal_entries();
    let true_trace = pairwise_sum(&diagonal);
    let true_diag = diagonal[cell.diag_index];
    let k_max = *ks.last().expect("validated nonempty");
    let order = tensor.order();

    let mut rows = Vec::new();
    for (t, &dist) in dists.iter().enumerate() {
        let probe_base = derive_run_seed(cell.cell_seed, 1, t as u64);
        // (trace samples, diag-entry samples) per run
        let per_run: Vec<(Vec<f64>, Vec<f64>)> = (0..runs as u64)
            .into_par_iter()
            .map(|run| {
                let (tr, dg) = run_joint_samples(&oracle, dist, k_max, probe_base, run)?;
                Ok((tr.trace_samples().expect("trace series"), dg.entry_samples(cell.diag_index)))
            })
            .collect::<Result<_>>()?;
        for &k in ks {
            let trace_est: Vec<f64> = per_run.iter().map(|(tr, _)| mean(&tr[..k])).collect();
            let diag_est: Vec<f64> = per_run.iter().map(|(_, dg)| mean(&dg[..k])).collect();
            rows.push(summarize(order, cell.alpha, dist, k, ErrorTarget::Trace, true_trace, &trace_est, cell.cell_seed));
            rows.push(summarize(
                order,
                cell.alpha,
                dist,
                k,
                ErrorTarget::Diagonal(cell.diag_index),
                true_diag,
                &diag_est,
                cell.cell_seed,
            ));
        }
    }
    Ok(rows)
}

pub fn tensor_seed(base_seed: u64) -> u64 {
    derive_run_seed(base_seed, u64::MAX, 0)
}

pub fn cell_seed(base_seed: u64, order: usize, alpha_index: usize) -> u64 {
    derive_run_seed(base_seed, order as u64, alpha_index as u64)
}

/// Rows ordered by `(N, α, dist, K)` with the trace row before the diagonal row.
pub fn run_mare_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let gen_seed = tensor_seed(config.base_seed);
    let mut rows = Vec::new();
    for &order in &config.orders {
        for (a_idx, &alpha) in config.alphas.iter().enumerate() {
            let tensor = generate_with_alpha(&GeneratorSpec { order, dim: config.dim, alpha, seed: gen_seed })?;
            let seed = cell_seed(config.base_seed, order, a_idx);
            let diag_index = match config.target_diag_index {
                DiagIndexPolicy::Fixed(i) => i,
                DiagIndexPolicy::RandomPerTensor => {
                    SplitMix64::new(derive_run_seed(seed, 0, 0)).next_below(config.dim as u64) as usize
                }
            };
            let cell = CellSpec { tensor: &tensor, alpha, diag_index, cell_seed: seed };
            rows.extend(run_mare_cell(&cell, &config.dists, &config.ks, config.runs)?);
        }
    }
    Ok(rows)
}

fn alpha_tag(alpha: f64) -> String {
    alpha.to_string().replace('.', "p")
}

/// MARE-vs-K and quartile-band charts for every (N, α, target).
pub fn mare_charts(rows: &[ResultRow]) -> Vec<(String, LineChart)> {
    let mut keys: Vec<(usize, f64, bool)> = Vec::new();
    for r in rows {
        let key = (r.order, r.alpha, matches!(r.target, ErrorTarget::Trace));
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut charts = Vec::new();
    for (order, alpha, is_trace) in keys {
        let cell: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.order == order && r.alpha == alpha && matches!(r.target, ErrorTarget::Trace) == is_trace)
            .collect();
        let target_name = match cell[0].target {
            ErrorTarget::Trace => "trace".to_string(),
            ErrorTarget::Diagonal(i) => format!("diagonal entry {i}"),
        };
        let mut dists: Vec<ProbeDistribution> = Vec::new();
        for r in &cell {
            if !dists.contains(&r.dist) {
                dists.push(r.dist);
            }
        }
        let by_dist = |d: ProbeDistribution| cell.iter().filter(move |r| r.dist == d);
        let tag = format!("{}_N{order}_a{}", if is_trace { "trace" } else { "diag" }, alpha_tag(alpha));
        charts.push((
            format!("mare_{tag}.svg"),
            LineChart {
                title: format!("MARE, {target_name}, N={order}, alpha={alpha}"),
                x_label: "K".into(),
                y_label: "MARE".into(),
                series: dists
                    .iter()
                    .map(|&d| Series {
                        label: d.to_string(),
                        points: by_dist(d).map(|r| (r.k as f64, r.mare)).collect(),
                        band: None,
                    })
                    .collect(),
            },
        ));
        charts.push((
            format!("quartiles_{tag}.svg"),
            LineChart {
                title: format!("Signed relative error quartiles, {target_name}, N={order}, alpha={alpha}"),
                x_label: "K".into(),
                y_label: "signed relative error (median, Q1-Q3)".into(),
                series: dists
                    .iter()
                    .map(|&d| Series {
                        label: d.to_string(),
                        points: by_dist(d).map(|r| (r.k as f64, r.median)).collect(),
                        band: Some(by_dist(d).map(|r| (r.q1, r.q3)).collect()),
                    })
                    .collect(),
            },
        ));
    }
    charts
}

/// Writes `mare.{csv,tsv}` and the SVG charts into `dir`.
pub fn write_mare_outputs(dir: &Path, rows: &[ResultRow], format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let table = dir.join(format!("mare.{}", format.extension()));
    fs::write(&table, mare_table(rows, format))?;
    written.push(table);
    for (name, chart) in mare_charts(rows) {
        let path = dir.join(name);
        fs::write(&path, chart.to_svg())?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightnessRow {
    pub order: usize,
    pub dim: usize,
    pub exact: f64,
    pub upper: f64,
    pub ratio: f64,
}

pub const TIGHTNESS_HEADER: [&str; 5] = ["order", "dim", "exact", "upper", "ratio"];

/// Closed-form Rademacher trace variance of the all-ones tensor against its
/// bound `2(‖A‖_F² − Σ a²_{j,...,j})`, over the grid `orders × dims`.
pub fn run_tightness_experiment(orders: &[usize], dims: &[usize]) -> Result<Vec<TightnessRow>> {
    let mut rows = Vec::with_capacity(orders.len() * dims.len());
    for &order in orders {
        for &dim in dims {
            let ratio = crate::analysis::tightness_ratio_all_ones(order, dim)?;
            let d = dim as f64;
            let dn = d.powi(order as i32);
            rows.push(TightnessRow {
                order,
                dim,
                exact: dn - d * d + d * (d - 1.0) * 2f64.powi(order as i32 - 1),
                upper: 2.0 * (dn - d),
                ratio,
            });
        }
    }
    Ok(rows)
}

pub fn tightness_table(rows: &[TightnessRow], format: OutputFormat) -> String {
    let sep = format.separator();
    let mut out = join_row(&TIGHTNESS_HEADER, sep);
    for r in rows {
        let _ = write!(
            out,
            "{}",
            join_row(
                &[r.order.to_string(), r.dim.to_string(), r.exact.to_string(), r.upper.to_string(), r.ratio.to_string()],
                sep
            )
        );
    }
    out
}

pub fn tightness_chart(rows: &[TightnessRow]) -> LineChart {
    let mut orders: Vec<usize> = rows.iter().map(|r| r.order).collect();
    orders.dedup();
    LineChart {
        title: "Exact variance / upper bound, all-ones tensors (Rademacher)".into(),
        x_label: "d".into(),
        y_label: "ratio".into(),
        series: orders
            .iter()
            .map(|&n| Series {
                label: format!("N={n}"),
                points: rows.iter().filter(|r| r.order == n).map(|r| (r.dim as f64, r.ratio)).collect(),
                band: None,
            })
            .collect(),
    }
}

pub fn write_tightness_outputs(dir: &Path, rows: &[TightnessRow], format: OutputFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let table = dir.join(format!("tightness.{}", format.extension()));
    fs::write(&table, tightness_table(rows, format))?;
    let svg = dir.join("tightness.svg");
    fs::write(&svg, tightness_chart(rows).to_svg())?;
    Ok(vec![table, svg])
}
