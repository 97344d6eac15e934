// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fbl_ec::channel::{db_to_linear, Link, SystemParams};
use fbl_ec::effcap::{ec_cap, ec_expint, ec_lower_bound, ec_quadrature, EcValue, Method};
use fbl_ec::mcsim::{ec_monte_carlo, McConfig, McEstimate, McMode, McSampler, RNG_FAMILY};
use fbl_ec::optim::{alternate_optimize, optimize_grid, OptimOptions, OptimResult};
use fbl_ec::output::{write_metadata, write_optim_grid_csv, write_trace_csv};
use fbl_ec::specfun::Tolerance;
use fbl_ec::sweep::{cmd_sweep, metadata_path, SweepSpec, SweptField, Units};

mod config;
mod grid;

use config::{FileConfig, GridValue};

const DEFAULT_THETA: f64 = 0.01;
const DEFAULT_N: u32 = 300;
const DEFAULT_SAMPLES: u64 = 1_000_000;
const DEFAULT_SEED: u64 = 1;

/// Bad or missing arguments; exits with status 2 like clap's own errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "fbl-ec",
    version,
    about = "Effective capacity of finite-blocklength transmission over parallel Rayleigh channels with estimated CSI"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the effective capacity at one operating point
    Eval(EvalArgs),
    /// Evaluate along one parameter axis and write CSV plus a metadata sidecar
    Sweep(SweepArgs),
    /// Monte-Carlo estimate at one operating point
    Mc(McArgs),
    /// Jointly optimize pilot length and error probability
    Optimize(OptimizeArgs),
}

#[derive(Args)]
struct ParamArgs {
    /// JSON config; flags given on the command line take precedence
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// QoS exponent [default: 0.01]
    #[arg(long)]
    theta: Option<f64>,
    /// Channel uses per block [default: 300]
    #[arg(long)]
    n: Option<u32>,
    /// Pilot channel uses
    #[arg(long)]
    nt: Option<u32>,
    /// Parallel sub-channels
    #[arg(long)]
    m: Option<u32>,
    /// Transmit SNR in dB
    #[arg(long = "snr-db", allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Decoding error probability, in (0, 1)
    #[arg(long)]
    eps: Option<f64>,
    /// Noise variance [default: 1]
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    /// Monte-Carlo block realizations [default: 1000000]
    #[arg(long)]
    samples: Option<u64>,
    /// Monte-Carlo seed [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Samples per reduction batch; fixes the random streams
    #[arg(long)]
    batch: Option<u64>,
    /// Fading sampler: importance or direct [default: importance]
    #[arg(long)]
    sampler: Option<String>,
    /// Also sample the decoding-error event instead of integrating it out
    #[arg(long)]
    literal: bool,
    /// Serve negative instantaneous rates as zero
    #[arg(long)]
    clamp_rate: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Comma list of expint, lower_bound, quadrature, monte_carlo [default: expint,lower_bound]
    #[arg(long)]
    methods: Option<String>,
    /// Report bits per channel use instead of bits per block
    #[arg(long)]
    per_channel_use: bool,
    /// Print a JSON object instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    sim: SimArgs,
    /// Swept field: n_t, eps, gamma0_db (alias snr_db) or m
    #[arg(long)]
    sweep: Option<String>,
    /// Grid: start:stop[:step], log:start:stop:count, or a comma list
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Comma list of expint, lower_bound, monte_carlo [default: expint,lower_bound]
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    per_channel_use: bool,
    /// Output CSV; metadata goes to <PATH>.meta.json
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    per_channel_use: bool,
    /// Also compare against the exponential-integral value
    #[arg(long)]
    compare: bool,
    /// Write the estimate and its full configuration as JSON
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Starting error probability [default: 1e-3]
    #[arg(long)]
    eps0: Option<f64>,
    /// Stopping gap in bits/block [default: 1e-4]
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Iteration cap [default: 100]
    #[arg(long)]
    max_iter: Option<usize>,
    /// Write one CSV row per half-step of a single run
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Grid mode: sub-channel counts (same syntax as --grid)
    #[arg(long)]
    grid_m: Option<String>,
    /// Grid mode: SNR values in dB
    #[arg(long, allow_hyphen_values = true)]
    grid_snr_db: Option<String>,
    /// Grid mode output CSV; metadata goes to <PATH>.meta.json
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

/// Flags merged over the config file over built-in defaults.
struct Settings {
    theta: f64,
    n: u32,
    nt: Option<u32>,
    m: Option<u32>,
    snr_db: Option<f64>,
    eps: Option<f64>,
    sigma2: f64,
    file: FileConfig,
}

impl Settings {
    fn new(p: &ParamArgs) -> Result<Self> {
        let file = match &p.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(Settings {
            theta: p.theta.or(file.theta).unwrap_or(DEFAULT_THETA),
            n: p.n.or(file.n).unwrap_or(DEFAULT_N),
            nt: p.nt.or(file.nt),
            m: p.m.or(file.m),
            snr_db: p.snr_db.or(file.snr_db),
            eps: p.eps.or(file.eps),
            sigma2: p.sigma2.or(file.sigma2).unwrap_or(1.0),
            file,
        })
    }

    fn link(&self) -> Result<Link> {
        let link = Link {
            sigma2: self.sigma2,
            ..Link::new(
                self.theta,
                self.n,
                require(self.m, "m")?,
                db_to_linear(require(self.snr_db, "snr-db")?),
            )
        };
        link.validate()?;
        Ok(link)
    }

    fn params(&self) -> Result<SystemParams> {
        let p = self
            .link()?
            .with(require(self.nt, "nt")?, require(self.eps, "eps")?);
        p.validate()?;
        Ok(p)
    }

    fn mc(&self, sim: &SimArgs) -> Result<McConfig> {
        let f = &self.file;
        let mut cfg = McConfig::new(
            sim.samples.or(f.samples).unwrap_or(DEFAULT_SAMPLES),
            sim.seed.or(f.seed).unwrap_or(DEFAULT_SEED),
        );
        if let Some(b) = sim.batch.or(f.batch) {
            cfg.batch = b;
        }
        if let Some(s) = sim.sampler.as_ref().or(f.sampler.as_ref()) {
            cfg.sampler = s.parse::<McSampler>().map_err(|e| usage(e.to_string()))?;
        }
        if sim.literal || f.literal.unwrap_or(false) {
            cfg.mode = McMode::Literal;
        }
        cfg.clamp_rate = sim.clamp_rate || f.clamp_rate.unwrap_or(false);
        cfg.validate()?;
        Ok(cfg)
    }

    fn methods(&self, flag: Option<&String>) -> Result<Vec<Method>> {
        let names: Vec<String> = match (flag, &self.file.methods) {
            (Some(s), _) => s.split(',').map(str::to_owned).collect(),
            (None, Some(v)) => v.clone(),
            (None, None) => return Ok(vec![Method::Expint, Method::LowerBound]),
        };
        names
            .iter()
            .map(|s| s.parse::<Method>().map_err(|e| usage(e.to_string())))
            .collect()
    }

    fn per_channel_use(&self, flag: bool) -> bool {
        flag || self.file.per_channel_use.unwrap_or(false)
    }
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing --{flag} (flag or config key)")))
}

fn grid_arg(
    flag: Option<&String>,
    file: Option<&GridValue>,
    name: &str,
) -> Result<Option<Vec<f64>>> {
    let parsed = match (flag, file) {
        (Some(s), _) => grid::parse_grid(s),
        (None, Some(g)) => g.resolve(),
        (None, None) => return Ok(None),
    };
    parsed
        .map(Some)
        .map_err(|e| usage(format!("--{name}: {e:#}")))
}

fn scale(value: f64, per_use: bool, p: &SystemParams) -> f64 {
    if per_use {
        value / (p.m as f64 * p.n as f64)
    } else {
        value
    }
}

#[derive(Serialize)]
struct EvalReport {
    params: SystemParams,
    units: Units,
    avg_snr: f64,
    n_d: u32,
    theta_prime_n_d: f64,
    cap: f64,
    values: Vec<EcValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<McReport>,
}

#[derive(Serialize)]
struct McReport {
    config: McConfig,
    rng: &'static str,
    estimate: McEstimate,
}

fn units(per_use: bool) -> Units {
    if per_use {
        Units::BitsPerChannelUse
    } else {
        Units::BitsPerBlock
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let s = Settings::new(&a.params)?;
    let p = s.params()?;
    let per_use = s.per_channel_use(a.per_channel_use);
    let mut methods = s.methods(a.methods.as_ref())?;
    if a.sim.samples.is_some() && !methods.contains(&Method::MonteCarlo) {
        methods.push(Method::MonteCarlo);
    }

    let mut values = Vec::new();
    let mut mc = None;
    for m in &methods {
        let v = match m {
            Method::Expint => ec_expint(&p)?,
            Method::LowerBound => ec_lower_bound(&p)?,
            Method::Quadrature => ec_quadrature(&p, Tolerance::default())?,
            Method::MonteCarlo => {
                let cfg = s.mc(&a.sim)?;
                let est = ec_monte_carlo(&p, &cfg)?;
                mc = Some(McReport {
                    config: cfg,
                    rng: RNG_FAMILY,
                    estimate: est,
                });
                est.to_ec_value()
            }
        };
        values.push(EcValue {
            value: scale(v.value, per_use, &p),
            ci_halfwidth: scale(v.ci_halfwidth, per_use, &p),
            ..v
        });
    }
    let report = EvalReport {
        params: p,
        units: units(per_use),
        avg_snr: p.avg_snr(),
        n_d: p.n_d(),
        theta_prime_n_d: p.theta_prime() * p.n_d() as f64,
        cap: scale(ec_cap(p.theta, p.eps), per_use, &p),
        values,
        monte_carlo: mc,
    };

    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let unit = if per_use {
        "bits/channel use"
    } else {
        "bits/block"
    };
    println!("G            {}", report.avg_snr);
    println!("n_d          {}", report.n_d);
    println!("theta'n_d    {}", report.theta_prime_n_d);
    for v in &report.values {
        if v.method == Method::MonteCarlo {
            let est = &report
                .monte_carlo
                .as_ref()
                .expect("set with the value")
                .estimate;
            println!(
                "{:<12} {} +/- {} {unit} (95% CI, {} samples)",
                v.method.as_str(),
                v.value,
                v.ci_halfwidth,
                est.samples_used
            );
        } else {
            println!("{:<12} {} {unit}", v.method.as_str(), v.value);
        }
    }
    println!("cap          {} {unit}", report.cap);
    Ok(())
}

fn cmd_mc(a: &McArgs) -> Result<()> {
    let s = Settings::new(&a.params)?;
    let p = s.params()?;
    let cfg = s.mc(&a.sim)?;
    let per_use = s.per_channel_use(a.per_channel_use);
    let est = ec_monte_carlo(&p, &cfg)?;
    let unit = if per_use {
        "bits/channel use"
    } else {
        "bits/block"
    };
    println!("monte_carlo  {} {unit}", scale(est.value, per_use, &p));
    println!("stderr       {} {unit}", scale(est.stderr, per_use, &p));
    println!("samples      {}", est.samples_used);
    println!("seed         {}", cfg.seed);
    println!("sampler      {}", cfg.sampler.as_str());
    if a.compare {
        let exact = ec_expint(&p)?.value;
        println!("expint       {} {unit}", scale(exact, per_use, &p));
        println!("z            {}", (est.value - exact) / est.stderr);
    }
    if let Some(out) = &a.out {
        #[derive(Serialize)]
        struct McRun<'a> {
            tool: &'static str,
            version: &'static str,
            kind: &'static str,
            params: &'a SystemParams,
            config: &'a McConfig,
            rng: &'static str,
            estimate: &'a McEstimate,
        }
        let run = McRun {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            kind: "mc",
            params: &p,
            config: &cfg,
            rng: RNG_FAMILY,
            estimate: &est,
        };
        write_metadata(out, &run).with_context(|| format!("cannot write {}", out.display()))?;
    }
    Ok(())
}

fn cmd_sweep_args(a: &SweepArgs) -> Result<()> {
    let s = Settings::new(&a.params)?;
    let swept: SweptField = require(a.sweep.as_ref().or(s.file.sweep.as_ref()), "sweep")?
        .parse()
        .map_err(|e: fbl_ec::Error| usage(e.to_string()))?;
    let grid = require(
        grid_arg(a.grid.as_ref(), s.file.grid.as_ref(), "grid")?,
        "grid",
    )?;
    let first = *grid.first().ok_or_else(|| usage("--grid is empty"))?;

    // the swept field need not be given; its value is taken from the grid
    let nt = match swept {
        SweptField::NT => Some(first.max(0.0) as u32),
        _ => s.nt,
    };
    let m = match swept {
        SweptField::M => Some(first.max(0.0) as u32),
        _ => s.m,
    };
    let snr_db = match swept {
        SweptField::Gamma0Db => Some(first),
        _ => s.snr_db,
    };
    let eps = match swept {
        SweptField::Eps => Some(first),
        _ => s.eps,
    };
    let fixed = SystemParams {
        theta: s.theta,
        n: s.n,
        n_t: require(nt, "nt")?,
        m: require(m, "m")?,
        gamma0: db_to_linear(require(snr_db, "snr-db")?),
        sigma2: s.sigma2,
        eps: require(eps, "eps")?,
    };
    let methods = s.methods(a.methods.as_ref())?;
    let mc = if methods.contains(&Method::MonteCarlo) {
        Some(s.mc(&a.sim)?)
    } else {
        None
    };
    let spec = SweepSpec {
        swept,
        grid,
        fixed,
        methods,
        mc,
        units: units(s.per_channel_use(a.per_channel_use)),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let rows = cmd_sweep(&spec, &a.out).with_context(|| format!("sweep to {}", a.out.display()))?;
    let invalid = rows.iter().filter(|r| !r.valid).count();
    eprintln!(
        "wrote {} rows ({invalid} invalid) to {} and {}",
        rows.len(),
        a.out.display(),
        metadata_path(&a.out).display()
    );
    Ok(())
}

fn optim_options(a: &OptimizeArgs) -> Result<OptimOptions> {
    let d = OptimOptions::default();
    let opts = OptimOptions {
        eps0: a.eps0.unwrap_or(d.eps0),
        gap_tol: a.gap_tol.unwrap_or(d.gap_tol),
        max_iter: a.max_iter.unwrap_or(d.max_iter),
        ..d
    };
    if !(opts.eps0 > 0.0 && opts.eps0 < 1.0) {
        return Err(usage(format!(
            "--eps0 must be in (0, 1), got {}",
            opts.eps0
        )));
    }
    if !(opts.gap_tol > 0.0) || opts.max_iter < 1 {
        return Err(usage("--gap-tol must be > 0 and --max-iter >= 1"));
    }
    Ok(opts)
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<()> {
    let s = Settings::new(&a.params)?;
    let opts = optim_options(a)?;
    let grid_m = grid_arg(a.grid_m.as_ref(), s.file.grid_m.as_ref(), "grid-m")?;
    let grid_db = grid_arg(
        a.grid_snr_db.as_ref(),
        s.file.grid_snr_db.as_ref(),
        "grid-snr-db",
    )?;
    if grid_m.is_some() || grid_db.is_some() {
        if a.trace.is_some() {
            return Err(usage("--trace applies to a single run, not grid mode"));
        }
        let out = require(a.out.as_ref(), "out")?;
        let ms: Vec<u32> = match grid_m {
            Some(g) => g
                .iter()
                .map(|&x| {
                    if x >= 1.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
                        Ok(x as u32)
                    } else {
                        Err(usage(format!(
                            "--grid-m values must be positive integers, got {x}"
                        )))
                    }
                })
                .collect::<Result<_>>()?,
            None => vec![require(s.m, "m")?],
        };
        let dbs = match grid_db {
            Some(g) => g,
            None => vec![require(s.snr_db, "snr-db")?],
        };
        let base = Link {
            sigma2: s.sigma2,
            ..Link::new(s.theta, s.n, ms[0], db_to_linear(dbs[0]))
        };
        base.validate()?;
        return optimize_grid_files(&base, &ms, &dbs, &opts, out);
    }

    let link = s.link()?;
    let r = alternate_optimize(&link, &opts)?;
    if let Some(path) = &a.trace {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        write_trace_csv(BufWriter::new(file), &r)?;
    }
    print_optimum(&r, a.json)
}

fn print_optimum(r: &OptimResult, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(r)?);
        return Ok(());
    }
    println!("n_t*         {}", r.n_t_star);
    println!("eps*         {:e}", r.eps_star);
    println!("lower_bound  {} bits/block", r.ec_star);
    if let Some(v) = r.ec_expint {
        println!("expint       {v} bits/block");
    }
    println!("iterations   {}", r.iterations);
    println!(
        "boundary     {}",
        format!("{:?}", r.boundary).to_lowercase()
    );
    Ok(())
}

fn optimize_grid_files(
    base: &Link,
    ms: &[u32],
    dbs: &[f64],
    opts: &OptimOptions,
    out: &Path,
) -> Result<()> {
    let points = optimize_grid(base, ms, dbs, opts);
    let file = File::create(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_optim_grid_csv(BufWriter::new(file), &points)?;

    #[derive(Serialize)]
    struct GridMeta<'a> {
        tool: &'static str,
        version: &'static str,
        kind: &'static str,
        base: &'a Link,
        m: &'a [u32],
        snr_db: &'a [f64],
        options: &'a OptimOptions,
        float_format: &'static str,
    }
    let meta = GridMeta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: "optimize_grid",
        base,
        m: ms,
        snr_db: dbs,
        options: opts,
        float_format: "17 significant digits, scientific",
    };
    write_metadata(&metadata_path(out), &meta)
        .with_context(|| format!("cannot write {}", metadata_path(out).display()))?;
    let failed = points.iter().filter(|p| p.result.is_err()).count();
    eprintln!(
        "wrote {} grid points ({failed} failed) to {}",
        points.len(),
        out.display()
    );
    Ok(())
}

/// 2 for argument problems, 3 for numerical-domain failures, 4 for I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<fbl_ec::Error>() {
            return if e.is_io() { 4 } else { 3 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 4;
        }
    }
    1
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep_args(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Optimize(a) => cmd_optimize(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
