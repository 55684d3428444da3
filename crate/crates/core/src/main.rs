use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use serde::Deserialize;

use dfi::pipeline::{run, PipelineConfig, Until};
use dfi::scalespace::NormKind;
use dfi::simstudy::{run_sweep, write_sweep, SweepOptions, DEFAULT_NU_GRID, DEFAULT_RHO_GRID};
use dfi::Error;

#[derive(Parser)]
#[command(name = "dfi", version, about = "Scale-space dominant-feature identification for point data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage, including block cross-validation.
    Pipeline(Common),
    /// Fit the noise model only.
    Fit(Common),
    /// Fit, draw, and select scales.
    Scales(Common),
    /// Everything up to the per-detail credibility maps.
    Decompose(Common),
    /// Full analysis plus block cross-validation.
    Cv(Common),
    /// Two-process smoother sweep on simulated data.
    Simstudy(SimArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Max,
    Euclid,
}

impl From<NormArg> for NormKind {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Max => NormKind::Maximum,
            NormArg::Euclid => NormKind::Euclidean,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of simulated locations.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    /// Skip the detail fits.
    #[arg(long)]
    curves_only: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimConfig {
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_rho_grid")]
    rho_grid: Vec<f64>,
    #[serde(default = "default_nu_grid")]
    nu_grid: Vec<f64>,
    #[serde(default)]
    norm: NormKind,
    #[serde(default = "default_fit")]
    fit_details: bool,
}

fn default_n() -> usize {
    1024
}
fn default_seed() -> u64 {
    1
}
fn default_rho_grid() -> Vec<f64> {
    DEFAULT_RHO_GRID.to_vec()
}
fn default_nu_grid() -> Vec<f64> {
    DEFAULT_NU_GRID.to_vec()
}
fn default_fit() -> bool {
    true
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Domain(_) => 2,
        Error::Numeric(_) => 3,
        Error::NonConvergence { .. } => 4,
        Error::Stage { .. } => unreachable!("root unwraps stages"),
    }
}

fn set_threads(threads: Option<usize>) -> dfi::Result<()> {
    // dense kernels stay sequential so results do not depend on thread count
    faer::set_global_parallelism(faer::Par::Seq);
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run_common(args: &Common, until: Until, with_cv: bool) -> dfi::Result<()> {
    set_threads(args.threads)?;
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.norm {
        cfg.smoother.norm = n.into();
    }
    if let Some(a) = args.alpha {
        cfg.credibility.alpha = a;
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let res = run(&cfg, until, with_cv, &out)?;
    for p in &res.artifacts {
        info!("wrote {}", p.display());
    }
    if let Some(s) = &res.analysis.scales {
        println!("interior scales: {:?}", s.interior());
    }
    if let Some(cv) = &res.cv {
        for s in &cv.scale_stability {
            println!("lambda_{} = {}", s.index + 1, s.formatted);
        }
        if let (Some(r), Some(c)) = (cv.mean_rmse(), cv.mean_crps()) {
            println!("cv rmse {r:.4}, crps {c:.4}");
        }
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn run_sim(args: &SimArgs) -> dfi::Result<()> {
    set_threads(args.threads)?;
    let mut cfg: SimConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => toml::from_str("").expect("defaults"),
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.norm {
        cfg.norm = n.into();
    }
    if args.curves_only {
        cfg.fit_details = false;
    }
    if cfg.rho_grid.is_empty() || cfg.nu_grid.is_empty() {
        return Err(Error::Config("rho_grid and nu_grid must be non-empty".into()));
    }
    if cfg.rho_grid.iter().chain(&cfg.nu_grid).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Config("grid values must be positive".into()));
    }
    if cfg.n < 64 {
        return Err(Error::Config(format!("--n must be at least 64, got {}", cfg.n)));
    }
    let opts = SweepOptions {
        norm: cfg.norm,
        fit_details: cfg.fit_details,
        ..Default::default()
    };
    let result = run_sweep(cfg.n, cfg.seed, &cfg.rho_grid, &cfg.nu_grid, &opts)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let path = out.join("sweep.csv");
    write_sweep(&result, &path)?;
    for r in &result.records {
        println!("rho_s {:<5} nu_s {:<4} interior {:?}", r.rho_s, r.nu_s, r.interior);
    }
    println!("wrote {}", display(&path));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Pipeline(a) => run_common(a, Until::Attributes, true),
        Command::Fit(a) => run_common(a, Until::NoiseModel, false),
        Command::Scales(a) => run_common(a, Until::Scales, false),
        Command::Decompose(a) => run_common(a, Until::Decomposition, false),
        Command::Cv(a) => run_common(a, Until::Attributes, true),
        Command::Simstudy(a) => run_sim(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
