//! CSV emission. All files carry a `schema_version` column, rows are sorted
//! before writing, and floats use Rust's shortest round-trip formatting, so
//! a run is reproducible byte for byte. In deterministic mode the header
//! timestamp is suppressed and wall-clock fields are written as 0.

use anyhow::{Context, Result};
use mecsolve_core::{DualTrace, IterRecord};
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// One line of `results.csv`.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub realization: usize,
    pub method: String,
    pub eta: f64,
    pub deadline: f64,
    pub energy: f64,
    pub outer_iters: usize,
    pub dual_iters: usize,
    pub max_violation: f64,
    pub converged: bool,
    pub wall_ms: f64,
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes `header` + sorted `rows` to `path`. `rows` entries are
/// pre-rendered cells; the sort key is the rendered row itself after the
/// caller has ordered columns so that the natural sort is meaningful.
fn write_raw(
    path: &Path,
    header: &str,
    mut rows: Vec<(impl Ord, String)>,
    deterministic: bool,
) -> Result<()> {
    rows.sort();
    let mut text = String::new();
    if !deterministic {
        let unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(text, "# generated_unix {unix}");
    }
    let _ = writeln!(text, "{header}");
    for (_, row) in rows {
        let _ = writeln!(text, "{row}");
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_results(path: &Path, rows: &[ResultRow], deterministic: bool) -> Result<()> {
    let header = "schema_version,realization,method,eta,deadline,energy,outer_iters,dual_iters,max_violation,converged,wall_ms";
    let rendered = rows
        .iter()
        .map(|r| {
            let wall = if deterministic { 0.0 } else { r.wall_ms };
            let key = (
                r.realization,
                r.method.clone(),
                r.eta.to_bits(),
                r.deadline.to_bits(),
            );
            let line = format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                SCHEMA_VERSION,
                r.realization,
                r.method,
                num(r.eta),
                num(r.deadline),
                num(r.energy),
                r.outer_iters,
                r.dual_iters,
                num(r.max_violation),
                r.converged,
                num(wall)
            );
            (key, line)
        })
        .collect();
    write_raw(path, header, rendered, deterministic)
}

/// Per-outer-iteration trace of one solve.
pub fn write_trace(path: &Path, records: &[IterRecord], deterministic: bool) -> Result<()> {
    let header =
        "schema_version,iter,energy,energy_delta,max_constraint,step,inner_iters,messages_cumulative,wall_ms";
    let rendered = records
        .iter()
        .map(|r| {
            let wall = if deterministic { 0.0 } else { r.wall_ms };
            let line = format!(
                "{},{},{},{},{},{},{},{},{}",
                SCHEMA_VERSION,
                r.iter,
                num(r.energy),
                num(r.energy_delta),
                num(r.max_constraint),
                num(r.step),
                r.inner_iters,
                r.messages_cumulative,
                num(wall)
            );
            (r.iter, line)
        })
        .collect();
    write_raw(path, header, rendered, deterministic)
}

/// Multiplier-ascent trace of one solve: the per-outer-iteration dual runs
/// flattened into one global iteration counter with cumulative messages.
pub fn write_dual_trace(path: &Path, traces: &[DualTrace], deterministic: bool) -> Result<()> {
    let header = "k,dual_value,max_violation,messages_cumulative";
    let mut k = 0usize;
    let mut message_base = 0usize;
    let mut rendered = Vec::new();
    for tr in traces {
        let mut last = 0usize;
        for rec in &tr.records {
            let line = format!(
                "{},{},{},{}",
                k,
                num(rec.dual_value),
                num(rec.max_violation),
                message_base + rec.messages_cumulative
            );
            rendered.push((k, line));
            last = rec.messages_cumulative;
            k += 1;
        }
        message_base += last.max(tr.messages_total);
    }
    write_raw(path, header, rendered, deterministic)
}

/// Free-form summary table: caller supplies the header and rendered rows
/// with their sort keys.
pub fn write_table(
    path: &Path,
    header: &str,
    rows: Vec<(Vec<u64>, String)>,
    deterministic: bool,
) -> Result<()> {
    write_raw(path, header, rows, deterministic)
}
