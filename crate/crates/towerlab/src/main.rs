use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use towerlab::config::ExperimentConfig;
use towerlab::runner;
use towerlab::verify::{self, VerifyLevel};

/// Batch experiment runner for exactly samplable tower models.
#[derive(Parser)]
#[command(name = "towerlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (flat key=value with sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override; mandatory here or in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to TOWERLAB_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Exit 0 even when an estimate carries an instability flag.
    #[arg(long)]
    allow_unstable: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tower model; export its spec table, level masses and tails.
    Tower(Common),
    /// Exact transfer-operator decay and correlation curves, with a fit.
    Corr(Common),
    /// Large-deviation series on the configured grid.
    Ld(Common),
    /// Large and maximal large deviations with saturation diagnostics.
    Mld(Common),
    /// Recurrence-time tails (exact or Monte Carlo with censoring).
    Tails(Common),
    /// Expansion-time tails for the smooth systems.
    Etime(Common),
    /// Fit a decay class to an existing n,value CSV.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Input series CSV.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the verification suite and write a machine-readable report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// quick (structural subset) or full (everything).
        #[arg(long, default_value = "quick")]
        level: String,
    },
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("TOWERLAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or_else(num_threads_default)
}

fn num_threads_default() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn load_config(common: &Common) -> towerlab::Result<ExperimentConfig> {
    let path = common.config.as_ref().ok_or_else(|| {
        towerlab::Error::InvalidParameter("--config is required for this subcommand".into())
    })?;
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ExperimentConfig::from_text(&text, common.seed)?;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(
    common: &Common,
    f: impl FnOnce(&ExperimentConfig) -> towerlab::Result<runner::RunOutcome> + Send,
) -> towerlab::Result<ExitCode> {
    let cfg = load_config(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(common.threads))
        .build()
        .map_err(|e| towerlab::Error::InvalidParameter(e.to_string()))?;
    let outcome = pool.install(|| f(&cfg))?;
    for flag in &outcome.flags {
        eprintln!("flag: {flag}");
    }
    println!("artifacts written to {}", outcome.out_dir.display());
    if outcome.unstable && !common.allow_unstable {
        eprintln!("unstable estimate; rerun with --allow-unstable to accept");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_verify(common: &Common, level: &str) -> towerlab::Result<ExitCode> {
    let level = match level {
        "quick" => VerifyLevel::Quick,
        "full" => VerifyLevel::Full,
        other => {
            return Err(towerlab::Error::InvalidParameter(format!(
                "unknown verify level {other:?} (quick|full)"
            )))
        }
    };
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("verify_out"));
    std::fs::create_dir_all(&out)?;
    let seed = common.seed.unwrap_or(0x5EED);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(common.threads))
        .build()
        .map_err(|e| towerlab::Error::InvalidParameter(e.to_string()))?;
    let rows = pool.install(|| verify::run_acceptance(level, &out, seed))?;
    for row in &rows {
        println!("{}", row.line());
    }
    verify::write_report(&rows, &out.join("verify_report.json"))?;
    let failed = rows.iter().filter(|r| !r.passed).count();
    println!(
        "{} criteria, {} passed, {} failed",
        rows.len(),
        rows.len() - failed,
        failed
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Tower(c) => run(c, runner::run_tower),
        Command::Corr(c) => run(c, runner::run_corr),
        Command::Ld(c) => run(c, runner::run_ld),
        Command::Mld(c) => run(c, runner::run_mld),
        Command::Tails(c) => run(c, runner::run_tails),
        Command::Etime(c) => run(c, runner::run_etime),
        Command::Fit { common, input } => {
            match load_config(common) {
                Ok(cfg) => runner::run_fit(&cfg, input).map(|out| {
                    println!("artifacts written to {}", out.out_dir.display());
                    ExitCode::SUCCESS
                }),
                Err(e) => Err(e),
            }
        }
        Command::Verify { common, level } => run_verify(common, level),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
