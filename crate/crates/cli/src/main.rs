use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tetra_walk::cli_io::{bench, read_config, refinement_levels, run, validate};
use tetra_walk::reference::{convergence_study, dispersion_scan};
use tetra_walk::spinor_model::{Mode, Variant, WalkParams};
use tetra_walk::{Result, WalkError};

/// Tetrahedral quantum walk simulator.
#[derive(Parser)]
#[command(name = "tqw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured walk and write artifacts to output.dir.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Walk eigenphases against the Dirac energies on a momentum grid.
    #[command(allow_negative_numbers = true)]
    Dispersion {
        #[arg(long)]
        mass: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        pbox: f64,
        /// Samples per momentum axis.
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long, default_value = "massive_per_substep")]
        variant: String,
        #[arg(long, default_value = "dirac4")]
        mode: String,
        /// CSV destination (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Walk vs exact evolution over successive grid refinements.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Physical time; must be a multiple of every level's eps.
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suite; exits nonzero on any failure.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Throughput of the massive spinor walk on size³.
    Bench {
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long)]
        parallelism: Option<usize>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| WalkError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { config, parallelism } => {
            let cfg = read_config(&config)?;
            eprint!("{}", cfg.to_text());
            let s = run(&cfg, parallelism)?;
            eprintln!(
                "{} steps, final norm {:.16e}, max drift {:.3e}, {:.3} s",
                s.steps, s.final_norm, s.max_drift, s.walk_seconds
            );
            Ok(true)
        }
        Command::Dispersion { mass, eps, pbox, samples, variant, mode, out } => {
            let variant = Variant::parse(&variant)
                .ok_or_else(|| WalkError::InvalidArgument(format!("unknown variant `{variant}`")))?;
            let mode = Mode::parse(&mode).ok_or_else(|| WalkError::InvalidArgument(format!("unknown mode `{mode}`")))?;
            let report = dispersion_scan(&WalkParams::new(mass, eps, variant, mode), pbox, samples)?;
            emit(out.as_deref(), &report.to_csv())?;
            Ok(true)
        }
        Command::Converge { config, levels, time, out } => {
            let cfg = read_config(&config)?;
            let report = convergence_study(&cfg.initial, time, &refinement_levels(&cfg, levels)?, &cfg.params())?;
            emit(out.as_deref(), &report.to_csv())?;
            match report.estimated_order {
                Some(k) => eprintln!("estimated order {k:.4}"),
                None => eprintln!("estimated order undefined (zero error)"),
            }
            Ok(true)
        }
        Command::Validate { config } => {
            let report = validate(&read_config(&config)?)?;
            print!("{}", report.to_text());
            Ok(report.passed())
        }
        Command::Bench { size, steps, parallelism } => {
            print!("{}", bench(size, steps, parallelism)?.to_csv());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
