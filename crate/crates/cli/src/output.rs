//! CSV and summary emission. Floats are written with Rust's shortest
//! round-trip formatting, so identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use droopsim_core::scenario::{Divergence, Summary, Trace};
use serde::Serialize;

/// Column header of a trace with `n` converters. The column set depends on
/// the converter count only.
pub fn trace_header(n: usize) -> String {
    let mut h = String::from("time");
    for j in 1..=n {
        write!(h, ",I_{j}").unwrap();
    }
    for j in 1..=n {
        write!(h, ",V_DC{j}").unwrap();
    }
    h.push_str(",V_bus");
    for j in 1..=n {
        write!(h, ",R_d{j}").unwrap();
    }
    for j in 1..=n {
        write!(h, ",mode{j}").unwrap();
    }
    h.push_str(",dI");
    h
}

pub fn trace_csv(trace: &Trace<f64>, n: usize) -> String {
    let mut out = trace_header(n);
    out.push('\n');
    for r in &trace.records {
        write!(out, "{}", r.time).unwrap();
        for v in &r.currents {
            write!(out, ",{v}").unwrap();
        }
        for v in &r.terminal_voltages {
            write!(out, ",{v}").unwrap();
        }
        write!(out, ",{}", r.bus_voltage).unwrap();
        for v in &r.r_d {
            write!(out, ",{v}").unwrap();
        }
        for m in &r.modes {
            write!(out, ",{m}").unwrap();
        }
        match r.delta_i {
            Some(d) => writeln!(out, ",{d}").unwrap(),
            None => writeln!(out, ",").unwrap(),
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct SummaryFile {
    converged: bool,
    t_end: f64,
    final_bus_voltage: f64,
    max_bus_deviation: f64,
    steady_bus_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_i_pre_event: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_i_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio_residual: Option<f64>,
    final_currents: Vec<f64>,
    final_terminal_voltages: Vec<f64>,
    final_r_d: Vec<f64>,
    final_modes: Vec<u8>,
    final_corrections: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    divergence: Option<DivergenceFile>,
}

#[derive(Debug, Serialize)]
struct DivergenceFile {
    time: f64,
    step: usize,
}

pub fn summary_toml(summary: &Summary<f64>, divergence: Option<&Divergence<f64>>) -> String {
    let file = SummaryFile {
        converged: summary.converged,
        t_end: summary.t_end,
        final_bus_voltage: summary.final_bus_voltage,
        max_bus_deviation: summary.max_bus_deviation,
        steady_bus_deviation: summary.steady_bus_deviation,
        delta_i_pre_event: summary.delta_i_pre_event,
        delta_i_final: summary.delta_i_final,
        convergence_time: summary.convergence_time,
        ratio_residual: summary.ratio_residual_final,
        final_currents: summary.final_currents.clone(),
        final_terminal_voltages: summary.final_terminal_voltages.clone(),
        final_r_d: summary.final_r_d.clone(),
        final_modes: summary.final_modes.clone(),
        final_corrections: summary.final_corrections.clone(),
        divergence: divergence.map(|d| DivergenceFile {
            time: d.time,
            step: d.step,
        }),
    };
    toml::to_string(&file).expect("summary serialization cannot fail")
}

/// Sweep result header for `n` converters.
pub fn sweep_header(n: usize) -> String {
    let mut h = String::from(
        "index,value,converged,diverged,convergence_time,delta_i_pre_event,delta_i_final,\
         max_bus_deviation,steady_bus_deviation,final_bus_voltage,ratio_residual",
    );
    for j in 1..=n {
        write!(h, ",R_d{j}").unwrap();
    }
    h
}

pub fn sweep_row(index: usize, value: f64, summary: &Summary<f64>, diverged: bool) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut row = format!(
        "{index},{value},{},{},{},{},{},{},{},{},{}",
        summary.converged,
        diverged,
        opt(summary.convergence_time),
        opt(summary.delta_i_pre_event),
        opt(summary.delta_i_final),
        summary.max_bus_deviation,
        summary.steady_bus_deviation,
        summary.final_bus_voltage,
        opt(summary.ratio_residual_final),
    );
    for r in &summary.final_r_d {
        write!(row, ",{r}").unwrap();
    }
    row
}

pub fn write_text(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
