//! Result files: a versioned summary CSV, full JSON traces and SOH plot data.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::SimResult;

/// Schema tag written as the first line of every CSV file.
pub const CSV_SCHEMA: &str = "cellbal-results/1";

pub const RESULTS_COLUMNS: [&str; 21] = [
    "scenario_id",
    "scenario_seed",
    "strategy",
    "pattern",
    "lifespan_days",
    "reached_end_of_life",
    "drive_days",
    "balancing_periods",
    "balancing_cycles",
    "windows",
    "solver_calls",
    "timeouts",
    "infeasible",
    "floor_violations",
    "fallback_floor_violations",
    "ceiling_violations",
    "transfer_events",
    "max_plan_drift_ah",
    "final_min_soh_pct",
    "final_mean_soh_pct",
    "final_max_soh_pct",
];

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# schema: {CSV_SCHEMA}")?;
    Ok(csv::Writer::from_writer(file))
}

/// One row per (scenario, strategy, pattern), in the order given.
pub fn write_results_csv(path: &Path, results: &[SimResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RESULTS_COLUMNS)?;
    for r in results {
        let soh = &r.final_soh;
        let min = soh.iter().copied().fold(f64::INFINITY, f64::min);
        let max = soh.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = soh.iter().sum::<f64>() / soh.len().max(1) as f64;
        let s = &r.plan_stats;
        w.write_record([
            r.scenario_id.to_string(),
            r.scenario_seed.to_string(),
            r.strategy.clone(),
            r.pattern.label().to_string(),
            r.lifespan_days.to_string(),
            r.reached_end_of_life.to_string(),
            r.drive_days.to_string(),
            r.balancing_periods.to_string(),
            r.balancing_cycles.to_string(),
            s.windows.to_string(),
            s.solver_calls.to_string(),
            s.timeouts.to_string(),
            s.infeasible.to_string(),
            r.floor_violations.to_string(),
            r.fallback_floor_violations.to_string(),
            r.ceiling_violations.to_string(),
            r.transfer_events.to_string(),
            format!("{:.9}", r.max_plan_drift_ah),
            format!("{min:.6}"),
            format!("{mean:.6}"),
            format!("{max:.6}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Day versus minimum and mean SOH for every run, every `stride` days plus
/// the final day.
pub fn write_plot_data(path: &Path, results: &[SimResult], stride: usize) -> Result<()> {
    let stride = stride.max(1);
    let mut w = writer(path)?;
    w.write_record(["scenario_id", "strategy", "pattern", "day", "min_soh_pct", "mean_soh_pct"])?;
    for r in results {
        let n = r.min_soh_trace.len();
        for d in (0..n).filter(|d| d % stride == stride - 1 || d + 1 == n) {
            w.write_record([
                r.scenario_id.to_string(),
                r.strategy.clone(),
                r.pattern.label().to_string(),
                (d + 1).to_string(),
                format!("{:.6}", r.min_soh_trace[d]),
                format!("{:.6}", r.mean_soh_trace[d]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_json(path: &Path, results: &[SimResult]) -> Result<()> {
    std::fs::write(path, serde_json::to_string(results)?)?;
    Ok(())
}

pub fn read_results_json(path: &Path) -> Result<Vec<SimResult>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::MalformedResults(format!("{}: {e}", path.display())))
}
