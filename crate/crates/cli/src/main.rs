use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod experiments;
mod output;

use config::{parse_assignment, Config, Experiment};
use experiments::Failure;

#[derive(Parser)]
#[command(name = "hittingdim", version, about = "Hitting-time, dimension and Borel-Cantelli experiments on chaotic maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hitting-time or recurrence indicators over a radius ladder
    Hit(RunArgs),
    /// Local dimension from ball measures
    Dim(RunArgs),
    /// Visit counts for shrinking targets, with variance bound and summability check
    Sbc(RunArgs),
    /// Correlation decay of bump observables
    Corr(RunArgs),
    /// Oracle crosschecks and definition-level invariants
    Verify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (default: $HITTINGDIM_OUT, then ./hittingdim-out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn resolve(experiment: Experiment, args: &RunArgs) -> Result<Config, Failure> {
    let mut cfg = Config::new(experiment);
    if let Some(path) = &args.config {
        cfg.merge_file(path)?;
    }
    for s in &args.set {
        let (k, v) = parse_assignment(s)?;
        cfg.set(&k, v)?;
    }
    if let Some(seed) = args.seed {
        let seed = i64::try_from(seed).map_err(|_| Failure::Config("seed must be below 2^63".into()))?;
        cfg.set("seed", toml::Value::Integer(seed))?;
    }
    Ok(cfg)
}

fn run(experiment: Experiment, args: RunArgs) -> Result<(), Failure> {
    let cfg = resolve(experiment, &args)?;
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Failure::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let dir = output::out_dir(args.out, cfg.out.clone());
    let outcome = experiments::run(&cfg)?;
    let mut files = vec![("manifest.toml", cfg.to_manifest())];
    files.extend(outcome.files.iter().map(|(n, t)| (*n, t.clone())));
    output::write_all(&dir, &files).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    if let Some((_, report)) = outcome.files.iter().find(|(n, _)| *n == "report.txt" || *n == "verify.txt") {
        print!("{report}");
    }
    eprintln!("wrote {}", dir.display());
    outcome.failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Hit(a) => (Experiment::Hit, a),
        Command::Dim(a) => (Experiment::Dim, a),
        Command::Sbc(a) => (Experiment::Sbc, a),
        Command::Corr(a) => (Experiment::Corr, a),
        Command::Verify(a) => (Experiment::Verify, a),
    };
    match run(experiment, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
