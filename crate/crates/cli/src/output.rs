//! CSV and manifest writers. All floating-point values are formatted with 17
//! significant digits so outputs round-trip IEEE-754 doubles exactly and
//! byte-compare across platforms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use pdterm_core::experiment::{Method, MonteCarloSummary, RunConfig, ScenarioTraces};

/// 17 significant digits: exact round-trip for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

pub fn write_summary(out_dir: &Path, summary: &MonteCarloSummary) -> Result<()> {
    let mut w = writer(&out_dir.join("summary.csv"))?;
    writeln!(w, "scenario,method,mean_var_Yt,mean_YT,std_YT,macro_rmse")?;
    for cell in &summary.cells {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            cell.scenario,
            cell.method,
            fmt_f64(cell.mean_var_yt),
            fmt_f64(cell.mean_y_terminal),
            fmt_f64(cell.std_y_terminal),
            fmt_f64(cell.macro_rmse),
        )?;
    }
    for (method, var) in &summary.pooled_mean_var {
        writeln!(w, "all,{},{},,,", method, fmt_f64(*var))?;
    }
    Ok(())
}

pub fn write_pd_paths(
    out_dir: &Path,
    summary: &MonteCarloSummary,
    emit_traces: bool,
) -> Result<()> {
    for cell in &summary.cells {
        let path = out_dir.join(format!("pd_{}_{}.csv", cell.scenario, cell.method));
        let mut w = writer(&path)?;
        writeln!(w, "t,Y_t")?;
        for (idx, y) in cell.mean_pd_path.iter().enumerate() {
            writeln!(w, "{},{}", idx + 1, fmt_f64(*y))?;
        }
        if emit_traces {
            if let Some(reps) = &cell.replication_pd {
                let path = out_dir.join(format!("pd_{}_{}_reps.csv", cell.scenario, cell.method));
                let mut w = writer(&path)?;
                writeln!(w, "replication,t,Y_t")?;
                for (rep, series) in reps.iter().enumerate() {
                    for (idx, y) in series.iter().enumerate() {
                        writeln!(w, "{},{},{}", rep, idx + 1, fmt_f64(*y))?;
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn write_macro_paths(out_dir: &Path, traces: &[ScenarioTraces]) -> Result<()> {
    for trace in traces {
        let path = out_dir.join(format!("macro_{}.csv", trace.scenario));
        let mut w = writer(&path)?;
        writeln!(
            w,
            "t,gdp_forecast,unemp_forecast,gdp_realized,unemp_realized,M_forecast,M_realized"
        )?;
        let p = &trace.paths;
        for t in 0..p.forecast_index.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                t + 1,
                fmt_f64(p.gdp_forecast[t]),
                fmt_f64(p.unemp_forecast[t]),
                fmt_f64(p.gdp_realized[t]),
                fmt_f64(p.unemp_realized[t]),
                fmt_f64(p.forecast_index[t]),
                fmt_f64(p.realized_index[t]),
            )?;
        }
    }
    Ok(())
}

pub fn write_filter_traces(out_dir: &Path, traces: &[ScenarioTraces]) -> Result<()> {
    for trace in traces {
        for (method, rows) in &trace.filter_traces {
            let path = out_dir.join(format!("filter_trace_{}_{}.csv", trace.scenario, method));
            let mut w = writer(&path)?;
            writeln!(w, "t,mu,sigma,innovation,gain,method")?;
            for row in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    row.t,
                    fmt_f64(row.mu),
                    fmt_f64(row.sigma),
                    fmt_f64(row.innovation),
                    fmt_f64(row.gain),
                    method,
                )?;
            }
        }
    }
    Ok(())
}

/// FNV-1a 64-bit hash, hex-encoded. Stable across platforms; enough to pin a
/// config file in the run manifest.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[allow(clippy::too_many_arguments)]
pub fn write_manifest(
    out_dir: &Path,
    config_hash: &str,
    config: &RunConfig,
    methods: &[Method],
    threads: usize,
    command: &str,
) -> Result<()> {
    let mut w = writer(&out_dir.join("manifest.txt"))?;
    writeln!(w, "tool = pdterm {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "command = {command}")?;
    writeln!(w, "config_fnv1a = {config_hash}")?;
    writeln!(w, "master_seed = {}", config.master_seed)?;
    writeln!(w, "replications = {}", config.replications)?;
    writeln!(w, "horizon = {}", config.horizon)?;
    writeln!(w, "forecast_window = {}", config.anchor.forecast_horizon)?;
    writeln!(w, "threads = {threads}")?;
    writeln!(
        w,
        "scenarios = {}",
        config
            .scenarios
            .iter()
            .map(|s| s.name.as_str())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    writeln!(
        w,
        "methods = {}",
        methods
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    Ok(())
}
