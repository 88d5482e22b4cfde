//! Command line driver for the block proximal simulator.
//!
//! `run` executes an experiment grid from a JSON config (or the built-in
//! 48-agent classification defaults via `--paper`), `sweep` rescales a fixed
//! stepsize to expose the floor-versus-stepsize relationship, and `fstar`
//! reports the certified reference cost per seed. Exit code 2 flags a
//! configuration problem, 1 any other failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dbpm::experiment::{
    run_experiment, sweep_stepsize, ExperimentConfig, ExperimentError, ProblemKind,
};
use dbpm::BlockPartition;

/// Environment variable overriding the output directory (lower precedence
/// than `--out`).
const OUT_DIR_ENV: &str = "DBPM_OUT_DIR";

#[derive(Parser)]
#[command(name = "dbpm", version, about = "Distributed block proximal method simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured grid of block counts and seeds, writing traces,
    /// metadata, normalized curves and a per-block summary.
    Run {
        /// JSON experiment config; omitted fields take the built-in defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the built-in defaults without a config file.
        #[arg(long)]
        paper: bool,
        /// Replace the configured seed list with 0..k.
        #[arg(long, value_name = "k")]
        seeds: Option<u64>,
        /// Output directory override.
        #[arg(long, value_name = "dir")]
        out: Option<PathBuf>,
    },
    /// Rerun a fixed-stepsize config with scaled stepsizes and summarize the
    /// fitted error floors.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        paper: bool,
        /// Comma-separated positive stepsize factors.
        #[arg(long, value_delimiter = ',', required = true)]
        factors: Vec<f64>,
        #[arg(long, value_name = "dir")]
        out: Option<PathBuf>,
    },
    /// Solve the centralized reference problem for each seed and print the
    /// certified optimal cost.
    Fstar {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        paper: bool,
    },
}

fn load_config(
    config: Option<&PathBuf>,
    paper: bool,
    out: Option<PathBuf>,
) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None if paper => ExperimentConfig::default(),
        None => {
            return Err(ExperimentError::Config(
                "pass --config <path> or --paper".into(),
            ))
        }
    };
    if let Some(dir) = out.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)) {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run {
            config,
            paper,
            seeds,
            out,
        } => {
            let mut cfg = load_config(config.as_ref(), paper, out)?;
            if let Some(k) = seeds {
                cfg.seeds = (0..k).collect();
            }
            let summary = run_experiment(&cfg)?;
            for output in &summary.outputs {
                println!(
                    "wrote B={} seed={} -> {}",
                    output.block_count,
                    output.seed,
                    output.trace_path.display()
                );
            }
            for block in &summary.per_block {
                match &block.fit {
                    Some(fit) => println!(
                        "B={}: floor={:.6e} slope={:.6e} pre_floor_r2={:.4}",
                        block.block_count, fit.floor, fit.slope, fit.pre_floor_r2
                    ),
                    None => println!("B={}: decay fit degenerate", block.block_count),
                }
            }
            println!("summary -> {}", summary.summary_path.display());
        }
        Command::Sweep {
            config,
            paper,
            factors,
            out,
        } => {
            let cfg = load_config(config.as_ref(), paper, out)?;
            let summary = sweep_stepsize(&cfg, &factors)?;
            for row in &summary.rows {
                println!(
                    "factor={}: floor={:.6e} slope={:.6e}",
                    row.factor, row.floor, row.slope
                );
            }
            if !summary.monotone {
                eprintln!("warning: floors are not monotone in the stepsize factor");
            }
            println!("summary -> {}", summary.summary_path.display());
        }
        Command::Fstar { config, paper } => {
            let cfg = load_config(config.as_ref(), paper, None)?;
            let partition = BlockPartition::trivial(cfg.total_dim());
            for &seed in &cfg.seeds {
                let instance = cfg.build_instance(seed)?;
                let reference = cfg.solve_reference_for(&instance, &partition)?;
                println!(
                    "seed={seed} f_star={} certified={} gap={:.3e}",
                    reference.f_star, reference.certified, reference.certification_gap
                );
                if matches!(cfg.problem, ProblemKind::HingeRidge) && !reference.certified {
                    eprintln!(
                        "note: raise fstar_iterations (currently {}) to tighten the reference",
                        cfg.fstar_iterations
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ ExperimentError::Config(_)) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
