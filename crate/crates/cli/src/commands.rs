//! Subcommand implementations. Each returns the process exit code:
//! 0 success, 2 invalid scenario or arguments, 3 solver divergence; I/O and
//! other unexpected failures bubble up as errors and exit 1.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use droopsim_core::analysis;
use droopsim_core::Scenario64;
use rayon::prelude::*;

use crate::config::ScenarioFile;
use crate::output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Parameter paths `sweep` can vary; each applies one value to every
/// converter it concerns.
pub const SWEEP_PARAMS: [&str; 6] = [
    "adaptive.delta",
    "adaptive.gamma",
    "adaptive.r_d_init",
    "adaptive.update_period",
    "network.load_resistance",
    "comm.dropout_probability",
];

fn resolve_out_dir(flag: Option<&Path>, file: &ScenarioFile) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Ok(dir) = std::env::var("DROOPSIM_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    match &file.output.dir {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from("out"),
    }
}

fn load_and_build(path: &Path) -> Result<(ScenarioFile, Scenario64), i32> {
    let file = match ScenarioFile::load(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("invalid scenario: {e:#}");
            return Err(EXIT_INVALID);
        }
    };
    match file.build() {
        Ok(s) => Ok((file, s)),
        Err(e) => {
            eprintln!("invalid scenario: {e:#}");
            Err(EXIT_INVALID)
        }
    }
}

pub fn cmd_run(scenario_path: &Path, out_flag: Option<&Path>) -> Result<i32> {
    let (file, scenario) = match load_and_build(scenario_path) {
        Ok(pair) => pair,
        Err(code) => return Ok(code),
    };
    let out_dir = resolve_out_dir(out_flag, &file);
    let run = scenario.run()?;

    let n = scenario.converters.len();
    output::write_text(&out_dir, "trace.csv", &output::trace_csv(&run.trace, n))?;
    output::write_text(
        &out_dir,
        "summary.toml",
        &output::summary_toml(&run.summary, run.divergence.as_ref()),
    )?;
    println!("wrote {}", out_dir.join("trace.csv").display());
    println!("wrote {}", out_dir.join("summary.toml").display());

    if let Some(d) = &run.divergence {
        eprintln!(
            "solver diverged at t = {} s (step {}); trace truncated",
            d.time, d.step
        );
        return Ok(EXIT_DIVERGED);
    }
    println!("converged = {}", run.summary.converged);
    if let Some(d) = run.summary.delta_i_final {
        println!("delta_i_final = {d}");
    }
    println!("final_bus_voltage = {}", run.summary.final_bus_voltage);
    Ok(EXIT_OK)
}

pub struct AnalyzeArgs {
    pub voltages: (f64, f64),
    pub cables: (f64, f64),
    pub r_load: f64,
    pub droop: Option<(f64, f64)>,
    pub csv: bool,
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    let result = analysis::sharing_analysis(
        args.voltages.0,
        args.voltages.1,
        args.cables.0,
        args.cables.1,
        args.r_load,
        args.droop,
    );
    let a = match result {
        Ok(a) => a,
        Err(e) => {
            eprintln!("invalid network: {e}");
            return Ok(EXIT_INVALID);
        }
    };
    if args.csv {
        println!("I_1,I_2,dI,ratio_residual");
        println!("{},{},{},{}", a.i_1, a.i_2, a.delta_i, a.ratio_residual);
    } else {
        println!(
            "{:>14} {:>14} {:>14} {:>16}",
            "I_1 [A]", "I_2 [A]", "dI [A]", "ratio_residual"
        );
        println!(
            "{:>14.6} {:>14.6} {:>14.6} {:>16.6}",
            a.i_1, a.i_2, a.delta_i, a.ratio_residual
        );
    }
    Ok(EXIT_OK)
}

pub struct SweepArgs {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

fn apply_param(scenario: &mut Scenario64, param: &str, value: f64) -> Result<()> {
    match param {
        "adaptive.delta" => scenario.adaptive.iter_mut().for_each(|a| a.delta = value),
        "adaptive.gamma" => scenario.adaptive.iter_mut().for_each(|a| a.gamma = value),
        "adaptive.r_d_init" => scenario
            .adaptive
            .iter_mut()
            .for_each(|a| a.r_d_init = value),
        "adaptive.update_period" => scenario
            .adaptive
            .iter_mut()
            .for_each(|a| a.update_period = value),
        "network.load_resistance" => scenario.network.load_resistance = value,
        "comm.dropout_probability" => scenario.comm.dropout_probability = value,
        other => bail!(
            "unknown parameter path {other:?}; expected one of {}",
            SWEEP_PARAMS.join(", ")
        ),
    }
    Ok(())
}

pub fn cmd_sweep(scenario_path: &Path, args: &SweepArgs, out_flag: Option<&Path>) -> Result<i32> {
    let (file, base) = match load_and_build(scenario_path) {
        Ok(pair) => pair,
        Err(code) => return Ok(code),
    };
    if args.steps == 0 {
        eprintln!("invalid sweep: steps must be >= 1");
        return Ok(EXIT_INVALID);
    }
    if !args.from.is_finite() || !args.to.is_finite() {
        eprintln!("invalid sweep: range bounds must be finite");
        return Ok(EXIT_INVALID);
    }

    let grid: Vec<f64> = (0..args.steps)
        .map(|i| {
            if args.steps == 1 {
                args.from
            } else {
                args.from + (args.to - args.from) * i as f64 / (args.steps - 1) as f64
            }
        })
        .collect();

    // Validate every grid point before running any, so a bad range is a
    // clean rejection rather than a half-written sweep.
    let mut points = Vec::with_capacity(grid.len());
    for &value in &grid {
        let mut s = base.clone();
        if let Err(e) = apply_param(&mut s, &args.param, value) {
            eprintln!("invalid sweep: {e}");
            return Ok(EXIT_INVALID);
        }
        if let Err(e) = s.validate() {
            eprintln!("invalid sweep: {} = {value}: {e}", args.param);
            return Ok(EXIT_INVALID);
        }
        points.push(s);
    }

    let results: Vec<_> = points
        .par_iter()
        .map(|s| s.run())
        .collect::<Result<Vec<_>, _>>()?;

    let n = base.converters.len();
    let mut csv = output::sweep_header(n);
    csv.push('\n');
    for (i, (value, run)) in grid.iter().zip(&results).enumerate() {
        csv.push_str(&output::sweep_row(
            i,
            *value,
            &run.summary,
            run.divergence.is_some(),
        ));
        csv.push('\n');
    }
    let out_dir = resolve_out_dir(out_flag, &file);
    output::write_text(&out_dir, "sweep.csv", &csv)?;
    println!("wrote {}", out_dir.join("sweep.csv").display());
    println!(
        "{} points of {} in [{}, {}]",
        grid.len(),
        args.param,
        args.from,
        args.to
    );
    Ok(EXIT_OK)
}
