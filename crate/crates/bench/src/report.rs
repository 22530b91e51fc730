//! CSV persistence for evaluation results and report assembly.
//!
//! Three tables live under the run directory. `eval.csv` holds one row
//! per (cell, training seed) and is fully deterministic, so re-running a
//! cell rewrites its rows byte for byte. `timing.csv` mirrors its keys
//! but carries wall-clock means, which never reproduce; keeping them
//! apart is what lets the deterministic table stay stable. `report.csv`
//! aggregates over training seeds and adds recovery against the
//! full-schedule baseline; free-form metadata (including the only
//! timestamp in any artifact) sits in `#` comment lines above its header.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use ragdp_core::ragdp::recovery_rate;

use crate::runner::{row_sort_key, EvalRow, TimingRow};
use crate::{BenchError, Result};

fn csv_err(path: &Path, e: csv::Error) -> BenchError {
    BenchError::Runtime(format!("{}: {e}", path.display()))
}

/// Reads a headered CSV into typed rows. A missing file is an empty
/// table, so first runs and reruns share one code path.
fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_err(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_eval_rows(path: &Path) -> Result<Vec<EvalRow>> {
    read_rows(path)
}

pub fn write_eval_rows(path: &Path, rows: &[EvalRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_timing_rows(path: &Path) -> Result<Vec<TimingRow>> {
    read_rows(path)
}

pub fn write_timing_rows(path: &Path, rows: &[TimingRow]) -> Result<()> {
    write_rows(path, rows)
}

fn eval_key(row: &EvalRow) -> (String, String, u64) {
    (row.kind.clone(), row.method.clone(), row.train_seed)
}

/// Replaces old rows whose (kind, method, seed) reappears in `fresh`,
/// keeps the rest, and restores the canonical order.
pub fn merge_eval_rows(old: Vec<EvalRow>, fresh: Vec<EvalRow>) -> Vec<EvalRow> {
    let mut merged: Vec<EvalRow> = old
        .into_iter()
        .filter(|row| !fresh.iter().any(|n| eval_key(n) == eval_key(row)))
        .collect();
    merged.extend(fresh);
    merged.sort_by_key(row_sort_key);
    merged
}

pub fn merge_timing_rows(old: Vec<TimingRow>, fresh: Vec<TimingRow>) -> Vec<TimingRow> {
    let key = |r: &TimingRow| (r.kind.clone(), r.method.clone(), r.train_seed);
    let mut merged: Vec<TimingRow> = old
        .into_iter()
        .filter(|row| !fresh.iter().any(|n| key(n) == key(row)))
        .collect();
    merged.extend(fresh);
    merged.sort_by(|a, b| key(a).cmp(&key(b)));
    merged
}

/// One method aggregated over training seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: String,
    pub method: String,
    /// Network evaluations per generation call.
    pub steps: usize,
    pub r: f64,
    /// Training seeds averaged over.
    pub seeds: usize,
    pub episodes: usize,
    pub invalid: usize,
    /// Mean success rate over training seeds.
    pub success: f64,
    /// Success relative to the same kind's full-schedule baseline.
    /// Empty when that baseline never succeeds.
    pub recovery: Option<f64>,
    /// Nominal speedup: full schedule length over this method's steps.
    /// Empty for the replay cell, which spends no denoising steps.
    pub speedup: Option<f64>,
    /// Measured network evaluations per generation call.
    pub evals_per_generation: f64,
}

/// Aggregates per-seed rows into one row per (kind, method) and fills in
/// recovery against the same kind's `baseline-full` row. Errors when the
/// table is empty or a kind lacks its baseline.
pub fn build_report(rows: &[EvalRow]) -> Result<Vec<ReportRow>> {
    if rows.is_empty() {
        return Err(BenchError::Mismatch(
            "the evaluation table is empty; run `eval` before `report`".to_string(),
        ));
    }
    let mut sorted: Vec<&EvalRow> = rows.iter().collect();
    sorted.sort_by_key(|r| row_sort_key(r));

    struct Group<'a> {
        rows: Vec<&'a EvalRow>,
    }
    let mut groups: Vec<((String, String), Group)> = Vec::new();
    for row in sorted {
        let key = (row.kind.clone(), row.method.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.rows.push(row),
            None => groups.push((key, Group { rows: vec![row] })),
        }
    }

    let mean_success = |g: &Group| -> f64 {
        g.rows.iter().map(|r| r.success_rate).sum::<f64>() / g.rows.len() as f64
    };
    let baseline = |kind: &str| -> Option<f64> {
        groups
            .iter()
            .find(|((k, m), _)| k == kind && m == "baseline-full")
            .map(|(_, g)| mean_success(g))
    };

    let mut report = Vec::new();
    for ((kind, method), group) in &groups {
        let base = baseline(kind).ok_or_else(|| {
            BenchError::Mismatch(format!(
                "no baseline-full rows for kind `{kind}`; evaluate the baseline first"
            ))
        })?;
        let full_steps = groups
            .iter()
            .find(|((k, m), _)| k == kind && m == "baseline-full")
            .map(|(_, g)| g.rows[0].steps)
            .unwrap_or(0);
        let success = mean_success(group);
        let steps = group.rows[0].steps;
        let generations: u64 = group.rows.iter().map(|r| r.generations).sum();
        let network_evals: u64 = group.rows.iter().map(|r| r.network_evals).sum();
        report.push(ReportRow {
            kind: kind.clone(),
            method: method.clone(),
            steps,
            r: group.rows[0].r,
            seeds: group.rows.len(),
            episodes: group.rows.iter().map(|r| r.episodes).sum(),
            invalid: group.rows.iter().map(|r| r.invalid).sum(),
            success,
            recovery: recovery_rate(success, base),
            speedup: if steps == 0 {
                None
            } else {
                Some(full_steps as f64 / steps as f64)
            },
            evals_per_generation: if generations == 0 {
                0.0
            } else {
                network_evals as f64 / generations as f64
            },
        });
    }
    Ok(report)
}

/// First CPU model string from /proc/cpuinfo, with a portable fallback.
pub fn host_description() -> String {
    let model = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown-cpu".to_string());
    format!(
        "{model} ({}/{})",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Comment lines placed above the report header. The timestamp lives
/// here and nowhere else, so two runs of the same configuration differ
/// only in this block.
pub fn report_meta() -> Vec<String> {
    let unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    vec![
        "ragdp-bench report".to_string(),
        format!("generated-unix: {unix}"),
        format!("host: {}", host_description()),
    ]
}

pub fn write_report_csv(path: &Path, meta: &[String], rows: &[ReportRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = Vec::new();
    for line in meta {
        writeln!(out, "# {line}")?;
    }
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        for row in rows {
            writer
                .serialize(row)
                .map_err(|e| csv_err(path, e))?;
        }
        writer.flush()?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Fixed-width text rendering of the report for terminal output.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut table = vec![vec![
        "kind".to_string(),
        "method".to_string(),
        "steps".to_string(),
        "success".to_string(),
        "recovery".to_string(),
        "speedup".to_string(),
    ]];
    for row in rows {
        table.push(vec![
            row.kind.clone(),
            row.method.clone(),
            row.steps.to_string(),
            format!("{:.3}", row.success),
            match row.recovery {
                Some(v) => format!("{v:.3}"),
                None => "-".to_string(),
            },
            match row.speedup {
                Some(v) => format!("{v:.1}x"),
                None => "-".to_string(),
            },
        ]);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            for _ in cell.len()..widths[c] {
                out.push(' ');
            }
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    }
    out
}
