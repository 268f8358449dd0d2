use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};
use simtop_core::burgers::BurgersConfig;
use simtop_core::problems::BenchmarkId;
use simtop_core::runner::{default_snapshot_epochs, run, run_burgers, sweep, ProblemSource, RunConfig, RunFailure};
use simtop_core::Error;

/// Meshfree topology optimization of Stokes/Brinkman flow with kernel-corrected neural fields.
#[derive(Debug, Parser)]
#[command(name = "simtop", version)]
#[command(group(ArgGroup::new("problem").required(true).args(["benchmark", "config"])))]
struct Args {
    /// Built-in case: rugby, pipe-bend, diffuser, double-pipe or burgers-demo.
    #[arg(long)]
    benchmark: Option<BenchmarkId>,
    /// Problem definition file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lattice points along x and y (t for the Burgers demo).
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    grid: Option<Vec<usize>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train K seeds starting at --seed and report statistics of the final objective.
    #[arg(long, value_name = "K", num_args = 0..=1, default_missing_value = "10")]
    sweep: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated epochs whose density is saved.
    #[arg(long, value_delimiter = ',')]
    snapshot_epochs: Option<Vec<usize>>,
}

enum Job {
    Flow { config: RunConfig, sweep: Option<usize> },
    Burgers(BurgersConfig),
}

fn build(args: Args) -> Result<(Job, PathBuf), Error> {
    let out = args.out.clone();
    if args.benchmark == Some(BenchmarkId::BurgersDemo) {
        let mut cfg = BurgersConfig { seed: args.seed, ..Default::default() };
        if let Some(g) = &args.grid {
            (cfg.nx, cfg.nt) = (g[0], g[1]);
        }
        if let Some(e) = args.epochs {
            cfg.epochs = e;
        }
        if args.sweep.is_some() || args.snapshot_epochs.is_some() {
            return Err(Error::Config("--sweep and --snapshot-epochs apply to flow problems only".into()));
        }
        cfg.validate()?;
        return Ok((Job::Burgers(cfg), out));
    }
    let source = match (args.benchmark, args.config) {
        (Some(id), _) => ProblemSource::Benchmark(id),
        (None, Some(path)) => ProblemSource::File(path),
        (None, None) => unreachable!("clap requires one of --benchmark and --config"),
    };
    let mut cfg = RunConfig::new(source, args.out);
    if let Some(g) = args.grid {
        (cfg.nx, cfg.ny) = (g[0], g[1]);
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
        cfg.snapshot_epochs = default_snapshot_epochs(e);
    }
    if let Some(s) = args.snapshot_epochs {
        cfg.snapshot_epochs = s;
    }
    cfg.seed = args.seed;
    if let Some(k) = args.sweep {
        cfg.sweep = k;
    }
    cfg.validate()?;
    // fail fast on bad problem files before any training
    cfg.problem.load()?;
    Ok((Job::Flow { config: cfg, sweep: args.sweep }, out))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Conditioning { .. } => 2,
        _ => 1,
    }
}

fn report_failure(f: &RunFailure) -> ExitCode {
    eprintln!("error: {}", f.error);
    ExitCode::from(exit_code(&f.error))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (job, out) = match build(args) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match job {
        Job::Burgers(cfg) => match run_burgers(&cfg, &out) {
            Ok(kv) => {
                for (k, v) in &kv.0 {
                    println!("{k}={v}");
                }
                ExitCode::SUCCESS
            }
            Err(f) => report_failure(&f),
        },
        Job::Flow { config, sweep: None } => match run(&config) {
            Ok(s) => {
                for (k, v) in &s.to_key_values("ok").0 {
                    println!("{k}={v}");
                }
                ExitCode::SUCCESS
            }
            Err(f) => report_failure(&f),
        },
        Job::Flow { config, sweep: Some(k) } => match sweep(&config, k) {
            Ok(report) => {
                for (k, v) in &report.to_key_values().0 {
                    println!("{k}={v}");
                }
                if report.failures() == 0 {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
    }
}
