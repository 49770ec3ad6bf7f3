//! Command-line front end.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::cost::{Amount, CostReport};
use crate::data::save_dataset;
use crate::error::Result;
use crate::experiment::{costs_csv, emit_reports, load_config, run_experiment, run_experiment_with_threads};

#[derive(Debug, Parser)]
#[command(name = "pufsim", version, about = "Federated unlearning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment and write summary.json, rounds.csv and costs.csv.
    Run {
        config: PathBuf,
        /// Worker threads; results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory, overriding `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the cost table for every method without training.
    Costs {
        config: PathBuf,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Write the dataset of every seed to the output directory.
    GenData {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config.
    Validate { config: PathBuf },
}

/// Executes `cli`, returning what to print on success.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Run { config, threads, out } => {
            let cfg = load_config(&config)?;
            let report = match threads {
                Some(t) => run_experiment_with_threads(&cfg, t)?,
                None => run_experiment(&cfg)?,
            };
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let files = emit_reports(&report, &dir)?;
            let mut msg = String::new();
            for s in &report.seeds {
                match s {
                    crate::experiment::SeedOutcome::Ok(r) => {
                        let d = &r.efficacy.deltas;
                        let _ = writeln!(
                            msg,
                            "seed {}: recovery {} rounds{}, dTest {:.4} dForget {:.4} dSong {:.4} dYeom {:.4}",
                            r.seed,
                            r.recovery_rounds,
                            if r.recovery_capped { " (capped)" } else { "" },
                            d.test_acc,
                            d.forget_acc,
                            d.mia_song,
                            d.mia_yeom
                        );
                    }
                    crate::experiment::SeedOutcome::Failed { seed, error } => {
                        let _ = writeln!(msg, "seed {seed}: failed: {error}");
                    }
                }
            }
            for f in files {
                let _ = writeln!(msg, "wrote {}", f.display());
            }
            Ok(msg)
        }
        Command::Costs { config, csv } => {
            let report = load_config(&config)?.cost_table()?;
            Ok(if csv { costs_csv(&report) } else { cost_table(&report) })
        }
        Command::GenData { config, out } => {
            let cfg = load_config(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            std::fs::create_dir_all(&dir).map_err(|e| crate::Error::io(&dir, e))?;
            let mut msg = String::new();
            for &seed in &cfg.seeds {
                let path = dir.join(format!("dataset-seed{seed}.pfd"));
                save_dataset(&cfg.build_dataset(seed)?, &path)?;
                let _ = writeln!(msg, "wrote {}", path.display());
            }
            Ok(msg)
        }
        Command::Validate { config } => {
            load_config(&config)?;
            Ok(format!("{}: ok\n", config.display()))
        }
    }
}

fn amount(a: &Amount) -> String {
    if a.negligible {
        "~0".to_string()
    } else {
        format!("{:.2e}", a.value)
    }
}

/// Human-readable totals with ratios against retrain.
pub fn cost_table(report: &CostReport) -> String {
    let mut out = format!(
        "{:<12} {:>8} {:>20} {:>20} {:>20}\n",
        "method", "R_rec", "comm bytes", "comp FLOPs", "storage bytes"
    );
    for m in &report.methods {
        let cell = |a: &Amount, r: &crate::cost::Ratio| format!("{} ({})", amount(a), r.display());
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>20} {:>20} {:>20}",
            m.method.name(),
            m.recovery_rounds,
            cell(&m.total.comm_bytes, &m.ratios.comm),
            cell(&m.total.comp_flops, &m.ratios.comp),
            cell(&m.total.storage_bytes, &m.ratios.storage),
        );
    }
    out
}

/// Parses `std::env::args`, runs, and maps errors to a one-line message.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
