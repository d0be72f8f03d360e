//! Command-line front end. [`run`] is the whole program minus process exit,
//! so tests can drive it with in-memory writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{tensor_stats, variance_report, VarianceTarget};
use crate::error::{Error, Result};
use crate::estimators::{
    aggregate_median_of_means, estimate_both_once, mom_groups, run_samples, sample_size_bound, Aggregator,
    BoundTarget, EstimateKind,
};
use crate::experiment::{
    run_mare_experiment, run_tightness_experiment, write_mare_outputs, write_tightness_outputs,
    ExperimentConfig, OutputFormat,
};
use crate::format::{read_tensor, read_tensor_file, write_tensor, TensorFile};
use crate::probes::{parse_seed, ProbeDistribution, ProbeSet};
use crate::synth::{all_ones, gaussian_dense, generate_with_alpha, identity_like, GeneratorSpec};
use crate::tensor::{exact_diagonal, exact_trace, CpTensor, DenseTensor, QueryOracle, TensorOracle};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "tentrace", version, about = "Trace and diagonal estimation for tensors from tensor-vector queries")]
pub struct Cli {
    /// Base seed, decimal or 0x-hex.
    #[arg(long, global = true, value_parser = seed_arg)]
    seed: Option<u64>,

    /// Output file (gen-tensor, tables) or directory (experiments).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Tsv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Tsv => OutputFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    Trace,
    Diag,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Dist {
    Rademacher,
    Gaussian,
}

impl From<Dist> for ProbeDistribution {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Rademacher => ProbeDistribution::Rademacher,
            Dist::Gaussian => ProbeDistribution::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregatorArg {
    Mean,
    Mom,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    /// Entries N(0,1) with diagonal rescaled to the requested alpha.
    Alpha,
    Ones,
    Identity,
    Gaussian,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dense TNSR1 tensor.
    GenTensor {
        #[arg(long)]
        order: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = Kind::Alpha)]
        kind: Kind,
    },
    /// Exact trace or diagonal from d basis queries.
    Exact {
        #[arg(long, value_enum)]
        target: Target,
        file: PathBuf,
    },
    /// Randomized estimate from K queries.
    Estimate {
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long, value_enum, default_value_t = Dist::Rademacher)]
        dist: Dist,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        /// Run index used in seed derivation.
        #[arg(long, default_value_t = 0)]
        run: u64,
        /// Also report the median-of-means estimate.
        #[arg(long)]
        mom: bool,
        /// Median-of-means groups; defaults to ceil(8 ln(1/delta)).
        #[arg(long)]
        groups: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Use these N-1 probe vectors (one per line) for a single query.
        #[arg(long)]
        probe_file: Option<PathBuf>,
        file: PathBuf,
    },
    /// Exact variance and its upper bound, one CSV row.
    Variance {
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_enum)]
        dist: Dist,
        file: PathBuf,
    },
    /// Queries sufficient for an (epsilon, delta) relative approximation.
    SampleSize {
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_enum)]
        dist: Dist,
        #[arg(long, value_enum, default_value_t = AggregatorArg::Mean)]
        aggregator: AggregatorArg,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        /// Hypercontractivity constant R.
        #[arg(long, default_value_t = 1.0)]
        r_const: f64,
        file: PathBuf,
    },
    /// Synthetic experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// MARE and signed-error quartiles vs K over an (N, alpha) grid.
    Mare(MareArgs),
    /// Exact-variance-to-bound ratio for all-ones tensors.
    Tightness {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 3, 4, 5])]
        orders: Vec<usize>,
        /// Inclusive range `lo..hi` or a comma list.
        #[arg(long, default_value = "2..100")]
        dims: String,
    },
}

#[derive(Debug, Args)]
struct MareArgs {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    dists: Option<Vec<Dist>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// `random` or a fixed index.
    #[arg(long)]
    diag_index: Option<String>,
    #[arg(long)]
    allow_huge: bool,
}

fn seed_arg(s: &str) -> std::result::Result<u64, String> {
    parse_seed(s).map_err(|e| e.to_string())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Shape(_) => EXIT_USAGE,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::Numeric(_) | Error::Budget { .. } => EXIT_NUMERIC,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    let (mut out_buf, mut err_buf) = (Vec::new(), Vec::new());
    let result = pool.install(|| execute(&cli, &mut out_buf, &mut err_buf));
    let _ = out.write_all(&out_buf);
    let _ = err.write_all(&err_buf);
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

struct Table {
    sep: char,
    text: String,
}

impl Table {
    fn new(format: Format, header: &[&str]) -> Self {
        let mut t = Self { sep: OutputFormat::from(format).separator(), text: String::new() };
        t.row(header.iter().map(|s| s.to_string()));
        t
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let fields: Vec<String> = fields.into_iter().collect();
        self.text += &fields.join(&self.sep.to_string());
        self.text.push('\n');
    }
}

fn emit(cli: &Cli, table: Table, out: &mut dyn Write) -> Result<()> {
    match &cli.out {
        Some(path) => fs::write(path, table.text)?,
        None => out.write_all(table.text.as_bytes())?,
    }
    Ok(())
}

enum Loaded {
    Dense(QueryOracle<DenseTensor>),
    Cp(QueryOracle<CpTensor>),
}

impl Loaded {
    fn oracle(&self) -> &dyn TensorOracle {
        match self {
            Loaded::Dense(o) => o,
            Loaded::Cp(o) => o,
        }
    }
}

fn load(path: &Path) -> Result<Loaded> {
    Ok(match read_tensor_file(path)? {
        TensorFile::Dense(t) => Loaded::Dense(QueryOracle::new(t)),
        TensorFile::Cp(t) => Loaded::Cp(QueryOracle::new(t)),
    })
}

/// One probe per non-empty line; values separated by commas or whitespace.
pub fn parse_probe_file(text: &str) -> Result<ProbeSet> {
    let probes = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad probe value {s:?}"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    ProbeSet::from_vectors(probes)
}

fn execute(cli: &Cli, out: &mut Vec<u8>, err: &mut Vec<u8>) -> Result<()> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::GenTensor { order, dim, alpha, kind } => {
            let path = cli
                .out
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("gen-tensor needs --out <path>".into()))?;
            let tensor = match kind {
                Kind::Alpha => {
                    let alpha = alpha.ok_or_else(|| Error::InvalidArgument("--alpha is required".into()))?;
                    generate_with_alpha(&GeneratorSpec { order: *order, dim: *dim, alpha, seed })?
                }
                Kind::Ones => all_ones(*order, *dim)?,
                Kind::Identity => identity_like(*order, *dim)?,
                Kind::Gaussian => gaussian_dense(*order, *dim, seed)?,
            };
            write_tensor(path, &tensor)?;
            writeln!(err, "wrote {} ({} entries)", path.display(), tensor.data().len())?;
            Ok(())
        }
        Command::Exact { target, file } => {
            let loaded = load(file)?;
            let oracle = loaded.oracle();
            let mut table = Table::new(cli.format, &["quantity", "value"]);
            match target {
                Target::Trace => table.row(["trace".into(), exact_trace(oracle)?.to_string()]),
                Target::Diag => {
                    for (i, v) in exact_diagonal(oracle)?.iter().enumerate() {
                        table.row([format!("diag[{i}]"), v.to_string()]);
                    }
                }
            }
            table.row(["queries".into(), oracle.query_count().to_string()]);
            emit(cli, table, out)
        }
        Command::Estimate { target, dist, k, run, mom, groups, delta, probe_file, file } => {
            let loaded = load(file)?;
            let oracle = loaded.oracle();
            let kind = match target {
                Target::Trace => EstimateKind::Trace,
                Target::Diag => EstimateKind::Diagonal,
            };
            let (mean_est, mom_est): (Vec<f64>, Option<Vec<f64>>) = if let Some(pf) = probe_file {
                if *k != 1 {
                    return Err(Error::InvalidArgument("--probe-file supplies a single probe set; use --k 1".into()));
                }
                if *mom {
                    return Err(Error::InvalidArgument("--mom needs more than one sample".into()));
                }
                let probes = parse_probe_file(&fs::read_to_string(pf)?)?;
                let (y, x) = estimate_both_once(oracle, &probes)?;
                (if kind == EstimateKind::Trace { vec![x] } else { y }, None)
            } else {
                let series = run_samples(oracle, (*dist).into(), *k as usize, seed, *run, kind)?;
                let mean_est = series.samples.first().map_or(0, Vec::len);
                let means: Vec<f64> = (0..mean_est).map(|i| crate::numeric::mean(&series.entry_samples(i))).collect();
                let mom_est = if *mom {
                    if !(*delta > 0.0 && *delta < 1.0) {
                        return Err(Error::InvalidArgument(format!("--delta must lie in (0,1), got {delta}")));
                    }
                    let r = groups.unwrap_or(mom_groups(*delta) as usize);
                    let v = (0..mean_est)
                        .map(|i| aggregate_median_of_means(&series.entry_samples(i), r))
                        .collect::<Result<Vec<f64>>>()?;
                    Some(v)
                } else {
                    None
                };
                (means, mom_est)
            };
            let mut table = Table::new(cli.format, &["quantity", "value"]);
            let name = |i: usize| match kind {
                EstimateKind::Trace => "trace".to_string(),
                EstimateKind::Diagonal => format!("diag[{i}]"),
            };
            for (i, v) in mean_est.iter().enumerate() {
                table.row([format!("{}_mean", name(i)), v.to_string()]);
            }
            for (i, v) in mom_est.iter().flatten().enumerate() {
                table.row([format!("{}_mom", name(i)), v.to_string()]);
            }
            table.row(["queries".into(), oracle.query_count().to_string()]);
            emit(cli, table, out)
        }
        Command::Variance { target, index, dist, file } => {
            let tensor = read_tensor(file)?;
            let vt = match target {
                Target::Trace => VarianceTarget::Trace,
                Target::Diag => VarianceTarget::Diagonal(*index),
            };
            let report = variance_report(&tensor, vt, (*dist).into())?;
            let mut table = Table::new(cli.format, &["target", "dist", "exact", "upper", "ratio"]);
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            table.row([
                report.target.to_string(),
                report.dist.to_string(),
                report.exact.to_string(),
                opt(report.upper_bound),
                opt(report.ratio),
            ]);
            emit(cli, table, out)
        }
        Command::SampleSize { target, index, dist, aggregator, eps, delta, r_const, file } => {
            let tensor = read_tensor(file)?;
            let bt = match target {
                Target::Trace => BoundTarget::Trace,
                Target::Diag => BoundTarget::Diagonal(*index),
            };
            let agg = match aggregator {
                AggregatorArg::Mean => Aggregator::Mean,
                AggregatorArg::Mom => Aggregator::MedianOfMeans,
            };
            let b = sample_size_bound(bt, (*dist).into(), agg, &tensor_stats(&tensor), *eps, *delta, *r_const)?;
            let mut table =
                Table::new(cli.format, &["target", "dist", "aggregator", "epsilon", "delta", "r_const", "k", "r_groups"]);
            table.row([
                match bt {
                    BoundTarget::Trace => "trace".to_string(),
                    BoundTarget::Diagonal(i) => format!("diag({i})"),
                },
                b.dist.to_string(),
                b.aggregator.to_string(),
                b.epsilon.to_string(),
                b.delta.to_string(),
                b.r_const.to_string(),
                b.k.to_string(),
                b.r_groups.map(|r| r.to_string()).unwrap_or_default(),
            ]);
            if agg == Aggregator::Mean {
                writeln!(err, "note: K is stated up to the hypercontractivity constant R = {r_const}")?;
            }
            emit(cli, table, out)
        }
        Command::Experiment(ExperimentCommand::Mare(args)) => {
            let mut config = ExperimentConfig::default();
            if let Some(path) = &args.config {
                config.apply_key_values(&fs::read_to_string(path)?)?;
            }
            if let Some(v) = &args.orders {
                config.orders = v.clone();
            }
            if let Some(v) = &args.alphas {
                config.alphas = v.clone();
            }
            if let Some(v) = &args.dists {
                config.dists = v.iter().map(|&d| d.into()).collect();
            }
            if let Some(v) = &args.ks {
                config.ks = v.clone();
            }
            if let Some(v) = args.runs {
                config.runs = v;
            }
            if let Some(v) = args.dim {
                config.dim = v;
            }
            if let Some(v) = &args.diag_index {
                config.set("diag_index", v)?;
            }
            if let Some(s) = cli.seed {
                config.base_seed = s;
            }
            if let Some(o) = &cli.out {
                config.output_dir = Some(o.clone());
            }
            config.allow_huge |= args.allow_huge;
            let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
            let rows = run_mare_experiment(&config)?;
            for p in write_mare_outputs(&dir, &rows, cli.format.into())? {
                writeln!(out, "{}", p.display())?;
            }
            Ok(())
        }
        Command::Experiment(ExperimentCommand::Tightness { orders, dims }) => {
            let dims = parse_dims(dims)?;
            let rows = run_tightness_experiment(orders, &dims)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            for p in write_tightness_outputs(&dir, &rows, cli.format.into())? {
                writeln!(out, "{}", p.display())?;
            }
            Ok(())
        }
    }
}

fn parse_dims(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("bad --dims {spec:?}; use lo..hi or a comma list"));
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        Ok((lo..=hi).collect())
    } else {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
    }
}
