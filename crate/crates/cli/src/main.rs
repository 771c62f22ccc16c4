//! `tmslab` command line: run experiments, replay prediction logs, build
//! reports, and execute the property self-test suite.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 data or format
//! error, 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tmslab::config::{apply_overrides, ExperimentConfig, SeedConfig};
use tmslab::error::Error;
use tmslab::harness::{replay_run_dir, run_experiment_with};
use tmslab::logs::EpochRecord;
use tmslab::report::report;
use tmslab::selftest;

/// Environment variable naming the output root for relative run directories.
const OUTPUT_ROOT_ENV: &str = "TMSLAB_OUT";

#[derive(Parser)]
#[command(
    name = "tmslab",
    version,
    about = "Temporal-memory sample selection lab for learning with noisy labels"
)]
struct Cli {
    /// Suppress non-error output.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Print per-epoch progress.
    #[arg(long, short, global = true, conflicts_with = "quiet")]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config.
    Run {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Config overrides as dotted key=value pairs (repeatable),
        /// e.g. --set noise.rate=0.4.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (overrides the config and TMSLAB_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list; each seed runs into seed_<s>/ with a
        /// derived seed block (data=s, branch1=s+1, branch2=s+2, aug=s+3).
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Rebuild the partition trace of a finished run from its prediction log.
    Replay {
        /// Run directory holding predictions.csv and dataset.csv.
        #[arg(long)]
        run: PathBuf,
        /// Where to write the reconstructed trace
        /// (default: <run>/partitions_replay.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit summary and plot-data CSVs for a run or a family of seed runs.
    Report {
        /// Run directory (or parent of seed runs).
        #[arg(long)]
        run: PathBuf,
        /// Report output directory (default: <run>/report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute the memory-dynamics property suites and gradient checks.
    Selftest,
}

fn resolve_output_dir(config_dir: &Path, cli_out: Option<&Path>) -> PathBuf {
    if let Some(out) = cli_out {
        return out.to_path_buf();
    }
    if config_dir.is_relative() {
        if let Ok(root) = std::env::var(OUTPUT_ROOT_ENV) {
            if !root.is_empty() {
                return PathBuf::from(root).join(config_dir);
            }
        }
    }
    config_dir.to_path_buf()
}

fn parse_seed_list(raw: &str) -> Result<Vec<u64>, Error> {
    let mut seeds = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let seed: u64 = part
            .parse()
            .map_err(|e| Error::Config(format!("bad seed {part:?}: {e}")))?;
        if seeds.contains(&seed) {
            return Err(Error::Config(format!("duplicate seed {seed}")));
        }
        seeds.push(seed);
    }
    if seeds.is_empty() {
        return Err(Error::Config("--seeds lists no seeds".into()));
    }
    Ok(seeds)
}

fn run_one(config: &ExperimentConfig, quiet: bool, verbose: bool) -> Result<(), Error> {
    let mut on_epoch = |record: &EpochRecord| {
        if verbose {
            println!(
                "[epoch {:>4}] clean={} boundary={} noisy={} warmup={} | acc b1={:.4} b2={:.4} ens={:.4} | loss={:.4} ({:.2}s)",
                record.epoch,
                record.n_clean,
                record.n_boundary,
                record.n_noisy,
                record.n_warmup,
                record.acc_branch1,
                record.acc_branch2,
                record.acc_ensemble,
                record.loss_total,
                record.wall_time_s
            );
        }
    };
    let artifacts = run_experiment_with(config, &mut on_epoch)?;
    if !quiet {
        let last = artifacts.final_record();
        println!(
            "run complete: {} (epoch {}, ensemble accuracy {:.4}, noisy recall {:.4})",
            artifacts.dir.display(),
            last.epoch,
            last.acc_ensemble,
            last.noisy_recall
        );
    }
    Ok(())
}

fn cmd_run(
    config_path: &Path,
    overrides: &[String],
    out: Option<&Path>,
    seeds: Option<&str>,
    quiet: bool,
    verbose: bool,
) -> Result<(), Error> {
    let json = std::fs::read_to_string(config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config = apply_overrides(&json, overrides)?;
    config.validate()?;
    let base_dir = resolve_output_dir(&config.output_dir, out);
    match seeds {
        None => {
            config.output_dir = base_dir;
            run_one(&config, quiet, verbose)
        }
        Some(raw) => {
            for seed in parse_seed_list(raw)? {
                let mut per_seed = config.clone();
                per_seed.seeds = SeedConfig::derive(seed);
                per_seed.output_dir = base_dir.join(format!("seed_{seed}"));
                if !quiet {
                    println!("seed {seed} -> {}", per_seed.output_dir.display());
                }
                run_one(&per_seed, quiet, verbose)?;
            }
            Ok(())
        }
    }
}

fn cmd_selftest(quiet: bool) -> Result<(), Error> {
    let outcomes = selftest::run_all();
    let mut failed = 0;
    for outcome in &outcomes {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        if !quiet || !outcome.passed {
            println!("{tag} {} — {}", outcome.name, outcome.detail);
        }
        if !outcome.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::Numeric(format!(
            "{failed} of {} properties failed",
            outcomes.len()
        )));
    }
    if !quiet {
        println!("all {} properties passed", outcomes.len());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Run {
            config,
            set,
            out,
            seeds,
        } => cmd_run(
            config,
            set,
            out.as_deref(),
            seeds.as_deref(),
            cli.quiet,
            cli.verbose,
        ),
        Command::Replay { run, out } => {
            let path = replay_run_dir(run, out.as_deref())?;
            if !cli.quiet {
                println!("replayed partition trace written to {}", path.display());
            }
            Ok(())
        }
        Command::Report { run, out } => {
            let paths = report(run, out.as_deref())?;
            if !cli.quiet {
                println!("report written to {}", paths.dir.display());
            }
            Ok(())
        }
        Command::Selftest => cmd_selftest(cli.quiet),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
