//! Command-line front end of the bus current-sharing simulator: scenario
//! file loading and validation, run orchestration with CSV and summary
//! emission, closed-form sharing analysis, and parameter sweeps.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "droopsim",
    version,
    about = "Simulate and analyze current sharing of parallel converters on a DC bus"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario file; writes trace.csv and summary.toml.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Output directory. Default: $DROOPSIM_OUT_DIR, then the scenario's
        /// [output] dir, then "out".
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Closed-form steady-state sharing figures for two converters.
    Analyze {
        /// Terminal voltages V_1 V_2 [V].
        #[arg(long = "v", num_args = 2, required = true, value_names = ["V1", "V2"])]
        voltages: Vec<f64>,
        /// Cable resistances R_1 R_2 [ohm].
        #[arg(long = "rl", num_args = 2, required = true, value_names = ["R1", "R2"])]
        cables: Vec<f64>,
        /// Load resistance at the bus [ohm].
        #[arg(long = "rload")]
        r_load: f64,
        /// Droop gains added in series with the cables [ohm].
        #[arg(long = "rd", num_args = 2, value_names = ["D1", "D2"])]
        droop: Option<Vec<f64>>,
        /// Emit one machine-readable CSV line instead of the table.
        #[arg(long)]
        csv: bool,
    },
    /// Re-run a scenario across a parameter grid; writes sweep.csv.
    Sweep {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Parameter to vary: adaptive.delta, adaptive.gamma,
        /// adaptive.r_d_init, adaptive.update_period,
        /// network.load_resistance, or comm.dropout_probability.
        #[arg(long)]
        param: String,
        /// First grid value.
        #[arg(long)]
        from: f64,
        /// Last grid value.
        #[arg(long)]
        to: f64,
        /// Number of grid points (>= 1).
        #[arg(long)]
        steps: usize,
        /// Output directory. Default: $DROOPSIM_OUT_DIR, then the scenario's
        /// [output] dir, then "out".
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// Parses arguments and dispatches; returns the process exit code.
pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out } => commands::cmd_run(&scenario, out.as_deref()),
        Command::Analyze {
            voltages,
            cables,
            r_load,
            droop,
            csv,
        } => commands::cmd_analyze(&commands::AnalyzeArgs {
            voltages: (voltages[0], voltages[1]),
            cables: (cables[0], cables[1]),
            r_load,
            droop: droop.map(|d| (d[0], d[1])),
            csv,
        }),
        Command::Sweep {
            scenario,
            param,
            from,
            to,
            steps,
            out,
        } => commands::cmd_sweep(
            &scenario,
            &commands::SweepArgs {
                param,
                from,
                to,
                steps,
            },
            out.as_deref(),
        ),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
