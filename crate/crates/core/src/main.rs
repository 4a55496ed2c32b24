use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sausage_perc::branching::{
    estimate_kernel, extinction_frequency, series_check, ClassSpec, KernelParams, OffspringKernel,
};
use sausage_perc::capacity::{
    cap_energy_lower, cap_hitting, cap_zt_upper, moment_report, tail_report, CapSampler, EnergyParams, GreenKernel,
    Method, SausageTarget, ZtParams,
};
use sausage_perc::harness::{run_experiment, write_outputs, ExperimentConfig, SCHEMA_VERSION};
use sausage_perc::percolation::{
    build_timed_graph, classify_good, coarse_grain, coarse_grain_explore, component_sizes, crossing_time,
    sample_configuration, CoarseInput, PercolationParams,
};
use sausage_perc::stats::wilson_interval;
use sausage_perc::stochastic::RngStream;
use sausage_perc::{Error, Result};

const EXIT_ERROR: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_UNDERPOWERED: u8 = 3;

#[derive(Parser)]
#[command(name = "sausage-perc", version, about = "Wiener-sausage percolation and capacity experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Capacity of sampled sausages by one estimator.
    CapEstimate(CapEstimateArgs),
    /// Capacity moments, optionally on the confinement event.
    Moments(MomentsArgs),
    /// Capacity exceedance probabilities.
    Tail(TailArgs),
    /// Crossing time and clusters of one configuration.
    Percolate(PercolateArgs),
    /// Good-box exploration around the box center.
    CoarseGrain(CoarseGrainArgs),
    /// Offspring kernels and branching-process extinction.
    Gw(GwArgs),
    /// Critical-time sweep over radii from a config file.
    TcSweep(TcSweepArgs),
}

#[derive(Args)]
struct Sausages {
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 8.0)]
    t: f64,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Path step (default `(r/4)²`).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Output {
    /// CSV destination (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary destination (default stderr).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Hitting,
    Energy,
    Zt,
}

#[derive(Args)]
struct CapEstimateArgs {
    #[command(flatten)]
    s: Sausages,
    #[arg(long, value_enum, default_value = "hitting")]
    method: MethodArg,
    /// Walks (hitting) or pairs (energy).
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    paths: u64,
    #[command(flatten)]
    o: Output,
}

#[derive(Args)]
struct MomentsArgs {
    #[command(flatten)]
    s: Sausages,
    #[arg(long, default_value_t = 500)]
    n_paths: usize,
    /// Walks per capacity estimate.
    #[arg(long, default_value_t = 4000)]
    walks: usize,
    /// Restrict to `W ⊆ B(0, c·√t)`.
    #[arg(long)]
    confine: Option<f64>,
    #[command(flatten)]
    o: Output,
}

#[derive(Args)]
struct TailArgs {
    #[command(flatten)]
    s: Sausages,
    #[arg(long, default_value_t = 1000)]
    n_paths: usize,
    #[arg(long, default_value_t = 4000)]
    walks: usize,
    /// Threshold multiples of the capacity unit.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    j: Vec<f64>,
    #[command(flatten)]
    o: Output,
}

#[derive(Args)]
struct BoxArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 6.0)]
    box_side: f64,
    #[arg(long, default_value_t = 1.0)]
    margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BoxArgs {
    fn params(&self) -> PercolationParams {
        PercolationParams {
            d: self.d,
            lambda: self.lambda,
            t: self.t,
            r: self.r,
            delta: self.delta,
            refine_levels: 0,
            box_side: self.box_side,
            margin: self.margin,
        }
    }
}

#[derive(Args)]
struct PercolateArgs {
    #[command(flatten)]
    b: BoxArgs,
    /// Ball factor for the good-point fraction.
    #[arg(long, default_value_t = 1.0)]
    c_b: f64,
    #[arg(long, default_value_t = 0.0)]
    cap_threshold: f64,
    #[arg(long, default_value_t = 1000)]
    walks: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoarseGrainArgs {
    #[command(flatten)]
    b: BoxArgs,
    #[arg(long, default_value_t = 1.0)]
    c_b: f64,
    #[arg(long, default_value_t = 2)]
    half_width: i32,
    #[arg(long, default_value_t = 0.0)]
    cap_threshold: f64,
    #[arg(long, default_value_t = 1000)]
    walks: usize,
    /// Run on a hand-built exploration input (JSON) instead of a sample.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GwArgs {
    /// Kernel CSV to read.
    #[arg(long, conflicts_with = "mu")]
    kernel: Option<PathBuf>,
    /// Single type with this mean instead of a kernel file.
    #[arg(long)]
    mu: Option<f64>,
    /// Estimate a kernel with these sausages instead.
    #[arg(long, conflicts_with_all = ["kernel", "mu"])]
    estimate: bool,
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 0.1)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 200)]
    n_outer: usize,
    #[arg(long, default_value_t = 0.95)]
    quantile: f64,
    /// Write the kernel in use to this CSV.
    #[arg(long)]
    write_kernel: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    root: usize,
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    #[arg(long, default_value_t = 1000)]
    max_gen: usize,
    #[arg(long, default_value_t = 200)]
    k_max: usize,
    #[arg(long, default_value_t = 1e12)]
    budget: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TcSweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: WORKERS, else all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::CapEstimate(a) => cap_estimate(a),
        Cmd::Moments(a) => moments(a),
        Cmd::Tail(a) => tail(a),
        Cmd::Percolate(a) => percolate(a),
        Cmd::CoarseGrain(a) => coarse(a),
        Cmd::Gw(a) => gw(a),
        Cmd::TcSweep(a) => tc_sweep(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
                _ => EXIT_ERROR,
            })
        }
    }
}

struct Table {
    d: usize,
    t: f64,
    r: f64,
    csv: String,
}

impl Table {
    fn new(d: usize, t: f64, r: f64) -> Self {
        Self { d, t, r, csv: "method,d,t,r,value,std_error,n\n".into() }
    }

    fn row(&mut self, method: &str, value: f64, std_error: f64, n: u64) {
        let _ = writeln!(self.csv, "{method},{},{},{},{value},{std_error},{n}", self.d, self.t, self.r);
    }

    fn emit(&self, o: &Output, summary: Value) -> Result<()> {
        write_or_print(o.out.as_deref(), &self.csv, false)?;
        write_or_print(o.summary.as_deref(), &(serde_json::to_string_pretty(&summary)? + "\n"), true)
    }
}

fn write_or_print(path: Option<&Path>, text: &str, stderr: bool) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None if stderr => {
            eprint!("{text}");
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, v: &Value) -> Result<()> {
    write_or_print(out, &(serde_json::to_string_pretty(v)? + "\n"), false)
}

fn sampler(s: &Sausages) -> CapSampler {
    let mut c = CapSampler::new(s.d, s.t, s.r, s.seed);
    c.delta = s.delta;
    c
}

fn cap_estimate(a: CapEstimateArgs) -> Result<u8> {
    let k = GreenKernel::new(a.s.d)?;
    let smp = sampler(&a.s);
    let mut table = Table::new(a.s.d, a.s.t, a.s.r);
    let mut rows = Vec::new();
    for i in 0..a.paths {
        let path = smp.path(i)?;
        let mut rng = RngStream::derive(a.s.seed, &[0xca9, i]);
        let est = match a.method {
            MethodArg::Hitting => {
                let mut p = smp.hitting;
                p.n_walks = a.n;
                cap_hitting(&k, &SausageTarget::new(&path, a.s.r)?, &mut rng, &p)?
            }
            MethodArg::Energy => cap_energy_lower(&k, &path, a.s.r, &EnergyParams { n_pairs: a.n }, &mut rng)?,
            MethodArg::Zt => cap_zt_upper(&k, &path, a.s.r, &ZtParams::default())?,
        };
        table.row(est.method.as_str(), est.value, est.std_error, est.n_samples);
        rows.push(est);
    }
    let method = rows.first().map(|e| e.method).unwrap_or(Method::Hitting);
    table.emit(
        &a.o,
        json!({
            "schema_version": SCHEMA_VERSION,
            "command": "cap-estimate",
            "method": method.as_str(),
            "bias": format!("{:?}", method.bias()),
            "d": a.s.d, "t": a.s.t, "r": a.s.r, "seed": a.s.seed,
            "estimates": rows,
        }),
    )?;
    Ok(0)
}

fn moments(a: MomentsArgs) -> Result<u8> {
    let mut smp = sampler(&a.s);
    smp.hitting.n_walks = a.walks;
    let rep = moment_report(&smp, a.n_paths, a.confine)?;
    let mut table = Table::new(a.s.d, a.s.t, a.s.r);
    let n = rep.n_used as u64;
    table.row("mean_cap", rep.mean_cap.value, rep.mean_cap.std_error, n);
    table.row("second_moment", rep.second_moment.value, rep.second_moment.std_error, n);
    table.row("fourth_moment", rep.fourth_moment.value, rep.fourth_moment.std_error, n);
    if let (Some((p, lo, hi)), Some(on)) = (rep.confined_fraction, rep.mean_cap_on_event) {
        table.row("confined_fraction", p, (hi - lo) / (2.0 * 1.96), rep.n_paths as u64);
        table.row("mean_cap_on_event", on.value, on.std_error, rep.n_paths as u64);
    }
    table.emit(
        &a.o,
        json!({"schema_version": SCHEMA_VERSION, "command": "moments", "seed": a.s.seed, "consistent": rep.is_consistent(), "report": rep}),
    )?;
    Ok(0)
}

fn tail(a: TailArgs) -> Result<u8> {
    let mut smp = sampler(&a.s);
    smp.hitting.n_walks = a.walks;
    let rep = tail_report(&smp, a.n_paths, &a.j)?;
    let mut table = Table::new(a.s.d, a.s.t, a.s.r);
    for row in &rep.rows {
        let se = (row.exceedance * (1.0 - row.exceedance) / rep.n_paths as f64).sqrt();
        table.row(&format!("exceedance_j{}", row.j), row.exceedance, se, rep.n_paths as u64);
    }
    table.emit(&a.o, json!({"schema_version": SCHEMA_VERSION, "command": "tail", "seed": a.s.seed, "report": rep}))?;
    Ok(0)
}

fn percolate(a: PercolateArgs) -> Result<u8> {
    let cfg = sample_configuration(&a.b.params(), a.b.seed, &[])?;
    let g = build_timed_graph(&cfg)?;
    let tau = crossing_time(&g);
    let mut sizes = component_sizes(&g, cfg.horizon());
    sizes.sort_unstable_by(|x, y| y.cmp(x));
    let good = classify_good(&cfg, a.c_b, a.cap_threshold, &hitting(a.walks), a.b.seed)?;
    let n_good = good.iter().filter(|&&g| g).count();
    emit_json(
        a.out.as_deref(),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "percolate",
            "params": a.b.params(),
            "seed": a.b.seed,
            "n_sausages": cfg.len(),
            "n_edges": g.edges.len(),
            "tau_star": tau,
            "largest_components": sizes.iter().take(10).collect::<Vec<_>>(),
            "n_components": sizes.len(),
            "good_fraction": if cfg.is_empty() { 0.0 } else { n_good as f64 / cfg.len() as f64 },
        }),
    )?;
    Ok(0)
}

fn hitting(walks: usize) -> sausage_perc::capacity::HittingParams {
    sausage_perc::capacity::HittingParams::conditioned(walks)
}

fn coarse(a: CoarseGrainArgs) -> Result<u8> {
    let state = if let Some(p) = &a.input {
        let text = std::fs::read_to_string(p)?;
        let input: CoarseInput =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
        coarse_grain(&input)
    } else {
        let cfg = sample_configuration(&a.b.params(), a.b.seed, &[])?;
        let g = build_timed_graph(&cfg)?;
        let good = classify_good(&cfg, a.c_b, a.cap_threshold, &hitting(a.walks), a.b.seed)?;
        coarse_grain_explore(&cfg, &g, &good, a.c_b, a.half_width)?
    };
    emit_json(
        a.out.as_deref(),
        &json!({"schema_version": SCHEMA_VERSION, "command": "coarse-grain", "certificate": state.certificate, "state": state}),
    )?;
    Ok(0)
}

fn gw(a: GwArgs) -> Result<u8> {
    let kernel = if let Some(p) = &a.kernel {
        OffspringKernel::from_csv(&std::fs::read_to_string(p)?)?
    } else if let Some(mu) = a.mu {
        OffspringKernel::single(mu)?
    } else if a.estimate {
        let spec = ClassSpec::standard(a.d, a.t, a.r)?;
        let params =
            KernelParams { lambda: a.lambda, n_outer: a.n_outer, quantile: a.quantile, ..KernelParams::default() };
        estimate_kernel(&spec, &params, &mut RngStream::derive(a.seed, &[0x6e]))?
    } else {
        return Err(Error::Config("give --kernel, --mu or --estimate".into()));
    };
    if let Some(p) = &a.write_kernel {
        std::fs::write(p, kernel.to_csv())?;
    }
    let extinct = extinction_frequency(&kernel, a.root, a.max_gen, a.runs, a.seed)?;
    let (lo, hi) = wilson_interval(extinct, a.runs, 1.96);
    let series = series_check(&kernel, a.root, a.k_max, a.budget)?;
    emit_json(
        a.out.as_deref(),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "gw",
            "n_types": kernel.n_types,
            "root": a.root,
            "runs": a.runs,
            "max_gen": a.max_gen,
            "seed": a.seed,
            "extinct": extinct,
            "extinction_frequency": extinct as f64 / a.runs.max(1) as f64,
            "extinction_ci": [lo, hi],
            "series": series,
        }),
    )?;
    Ok(0)
}

fn tc_sweep(a: TcSweepArgs) -> Result<u8> {
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let workers = match a.workers {
        Some(n) => Some(n),
        None => match std::env::var("WORKERS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| Error::Config(format!("WORKERS={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if workers == Some(0) {
        return Err(Error::Config("worker count must be positive".into()));
    }
    let res = run_experiment(&cfg, workers)?;
    write_outputs(&cfg, &res)?;
    if cfg.output_csv.is_none() {
        print!("{}", res.csv);
    }
    if cfg.output_json.is_none() {
        eprintln!("{}", serde_json::to_string_pretty(&res.summary)?);
    }
    if res.summary.underpowered {
        eprintln!("warning: more than half the trials of some cell never crossed");
        return Ok(EXIT_UNDERPOWERED);
    }
    Ok(0)
}
