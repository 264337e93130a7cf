use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::run::RunReport;
use crate::error::{Error, Result};
use crate::samplers::Strategy;

/// Seed-averaged test metrics for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: Strategy,
    pub seeds: Vec<u64>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Seeds whose run failed; non-empty marks a gap in this row.
    #[serde(default)]
    pub missing_seeds: Vec<u64>,
}

fn sorted_seeds(reports: &[RunReport]) -> Vec<u64> {
    let mut seeds: Vec<u64> = reports.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds
}

fn mean_row(strategy: Strategy, reports: &[RunReport], missing_seeds: Vec<u64>) -> AggregateRow {
    let n = reports.len().max(1) as f64;
    // Offset from the first value so identical inputs average exactly.
    let mean = |f: fn(&RunReport) -> f64| match reports.first() {
        None => f64::NAN,
        Some(first) => {
            let base = f(first);
            base + reports.iter().map(|r| f(r) - base).sum::<f64>() / n
        }
    };
    AggregateRow {
        strategy,
        seeds: sorted_seeds(reports),
        accuracy: mean(|r| r.test.accuracy),
        macro_f1: mean(|r| r.test.macro_f1),
        macro_precision: mean(|r| r.test.macro_precision),
        macro_recall: mean(|r| r.test.macro_recall),
        missing_seeds,
    }
}

/// Arithmetic mean of each test metric across seeds, one row per strategy
/// in input order. Every group must cover the same seed set.
pub fn aggregate_runs(groups: &[(Strategy, Vec<RunReport>)]) -> Result<Vec<AggregateRow>> {
    let Some((first_strategy, first)) = groups.first() else {
        return Ok(Vec::new());
    };
    let expected = sorted_seeds(first);
    for (strategy, reports) in groups {
        let seeds = sorted_seeds(reports);
        if seeds != expected || reports.is_empty() {
            return Err(Error::InconsistentSeeds(format!(
                "{strategy} has seeds {seeds:?}, {first_strategy} has {expected:?}"
            )));
        }
    }
    Ok(groups
        .iter()
        .map(|(s, reports)| mean_row(*s, reports, Vec::new()))
        .collect())
}

/// Like [`aggregate_runs`] but tolerates failed runs: each row averages
/// the seeds that completed and lists the rest in `missing_seeds`.
pub fn aggregate_with_gaps(
    groups: &[(Strategy, Vec<RunReport>)],
    expected_seeds: &[u64],
) -> Vec<AggregateRow> {
    groups
        .iter()
        .map(|(s, reports)| {
            let done = sorted_seeds(reports);
            let missing = expected_seeds
                .iter()
                .copied()
                .filter(|seed| !done.contains(seed))
                .collect();
            mean_row(*s, reports, missing)
        })
        .collect()
}

fn gap_marker(row: &AggregateRow) -> String {
    if row.missing_seeds.is_empty() {
        String::new()
    } else {
        format!(
            "missing:{}",
            row.missing_seeds
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join("|")
        )
    }
}

/// `strategy, runs, accuracy, macro_f1, macro_precision, macro_recall, gap`
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "strategy",
        "runs",
        "accuracy",
        "macro_f1",
        "macro_precision",
        "macro_recall",
        "gap",
    ])?;
    for r in rows {
        wtr.write_record([
            r.strategy.name().to_string(),
            r.seeds.len().to_string(),
            r.accuracy.to_string(),
            r.macro_f1.to_string(),
            r.macro_precision.to_string(),
            r.macro_recall.to_string(),
            gap_marker(r),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Fixed-width text table, metrics in percent.
pub fn format_aggregate_table(rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:>5} {:>8} {:>8} {:>8} {:>8}  gap",
        "strategy", "runs", "acc", "f1", "prec", "rec"
    );
    for r in rows {
        let pct = |x: f64| format!("{:.2}", 100.0 * x);
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>8} {:>8} {:>8} {:>8}  {}",
            r.strategy.name(),
            r.seeds.len(),
            pct(r.accuracy),
            pct(r.macro_f1),
            pct(r.macro_precision),
            pct(r.macro_recall),
            gap_marker(r)
        );
    }
    s
}
