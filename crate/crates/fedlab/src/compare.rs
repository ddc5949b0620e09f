//! Side-by-side comparison of finished runs at matched communication.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Result, RunError};
use crate::run::MetricsFile;

/// Fractions of the matched budget reported in the table.
pub const BUDGET_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct RunColumn {
    pub label: String,
    pub final_accuracy: Option<f64>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub runs: Vec<RunColumn>,
    /// The smallest total cost among the runs; every run has spent at
    /// least this much.
    pub matched_budget: f64,
    pub budgets: Vec<f64>,
    /// `accuracy[b][r]`: accuracy of run `r` at `budgets[b]` (latest
    /// evaluation within budget).
    pub accuracy: Vec<Vec<Option<f64>>>,
    pub warnings: Vec<String>,
}

fn read_metrics(path: &Path) -> Result<MetricsFile> {
    let bytes = std::fs::read(path).map_err(|e| RunError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| RunError::Other(format!("{}: {e}", path.display())))
}

pub fn compare_runs(paths: &[PathBuf]) -> Result<Comparison> {
    if paths.len() < 2 {
        return Err(RunError::Usage(
            "compare needs at least two metrics files".into(),
        ));
    }
    let files = paths
        .iter()
        .map(|p| read_metrics(p))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = paths
        .iter()
        .zip(&files)
        .map(|(p, f)| {
            let dir = p
                .parent()
                .and_then(|d| d.file_name())
                .map(|d| d.to_string_lossy().into_owned());
            format!(
                "{} ({})",
                dir.unwrap_or_else(|| p.display().to_string()),
                variant_name(f)
            )
        })
        .collect();
    Ok(compare_metrics(&files, &labels))
}

fn variant_name(f: &MetricsFile) -> String {
    serde_json::to_value(f.variant)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

pub fn compare_metrics(files: &[MetricsFile], labels: &[String]) -> Comparison {
    let mut warnings = Vec::new();
    let lineage = &files[0].env.lineage_hash;
    for (f, l) in files.iter().zip(labels).skip(1) {
        if &f.env.lineage_hash != lineage {
            warnings.push(format!(
                "{l} was evaluated on different data than {} (lineage hashes differ)",
                labels[0]
            ));
        }
    }
    let matched = files
        .iter()
        .map(|f| f.summary.total_cost)
        .fold(f64::INFINITY, f64::min);
    let budgets: Vec<f64> = BUDGET_FRACTIONS.iter().map(|x| x * matched).collect();
    let logs: Vec<_> = files.iter().map(MetricsFile::log).collect();
    let accuracy = budgets
        .iter()
        .map(|&b| logs.iter().map(|l| l.accuracy_at_budget(b)).collect())
        .collect();
    Comparison {
        runs: files
            .iter()
            .zip(labels)
            .map(|(f, l)| RunColumn {
                label: l.clone(),
                final_accuracy: f.summary.final_accuracy,
                total_cost: f.summary.total_cost,
            })
            .collect(),
        matched_budget: matched,
        budgets,
        accuracy,
        warnings,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |a| format!("{a:.4}"))
}

impl Comparison {
    /// Accuracy of run `r` minus run 0 at the matched budget.
    pub fn gap_at_matched(&self, r: usize) -> Option<f64> {
        let row = self.accuracy.last()?;
        Some(row[r]? - row[0]?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(
                s,
                "[{i}] {}  final accuracy {}  total cost {:.0}",
                r.label,
                cell(r.final_accuracy),
                r.total_cost
            );
        }
        let _ = write!(s, "{:>16}", "budget");
        for i in 0..self.runs.len() {
            let _ = write!(s, "{:>10}", format!("[{i}]"));
        }
        for i in 1..self.runs.len() {
            let _ = write!(s, "{:>10}", format!("[{i}]-[0]"));
        }
        s.push('\n');
        for (b, row) in self.budgets.iter().zip(&self.accuracy) {
            let _ = write!(s, "{b:>16.0}");
            for a in row {
                let _ = write!(s, "{:>10}", cell(*a));
            }
            for a in &row[1..] {
                let gap = a.zip(row[0]).map(|(x, y)| x - y);
                let _ = write!(
                    s,
                    "{:>10}",
                    gap.map_or_else(|| "-".into(), |g| format!("{g:+.4}"))
                );
            }
            s.push('\n');
        }
        s
    }

    /// `budget,run,label,accuracy,gap`, plus one `final` row per run.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| RunError::Other(e.to_string());
        w.write_record(["budget", "run", "label", "accuracy", "gap"])
            .map_err(err)?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for (b, row) in self.budgets.iter().zip(&self.accuracy) {
            for (r, a) in row.iter().enumerate() {
                let gap = a.zip(row[0]).map(|(x, y)| x - y);
                w.write_record([
                    b.to_string(),
                    r.to_string(),
                    self.runs[r].label.clone(),
                    opt(*a),
                    opt(gap),
                ])
                .map_err(err)?;
            }
        }
        for (r, run) in self.runs.iter().enumerate() {
            let gap = run
                .final_accuracy
                .zip(self.runs[0].final_accuracy)
                .map(|(x, y)| x - y);
            w.write_record([
                "final".into(),
                r.to_string(),
                run.label.clone(),
                opt(run.final_accuracy),
                opt(gap),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| RunError::Other(e.to_string()))
    }
}
