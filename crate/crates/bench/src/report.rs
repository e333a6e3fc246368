//! Per-seed summaries and the pooled metric table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use teamsched_core::probgen::Scale;

use crate::error::BenchError;
use crate::eval::EvalResult;

/// One evaluation run: one method, one dataset, one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    /// Scale the policy was trained on; empty for heuristics.
    pub train_scale: Option<Scale>,
    /// Sampling batch for hybridnet; empty otherwise.
    pub batch: Option<usize>,
    pub dataset_scale: Scale,
    pub seed: u64,
    pub problems: usize,
    pub rounds: usize,
    pub feasible_rounds: usize,
    pub adjusted_makespan: f64,
    pub runtime: f64,
}

impl RunSummary {
    /// Summarizes a run; every figure is recounted from its round records.
    pub fn from_result(r: &EvalResult, dataset_scale: Scale, train_scale: Option<Scale>, batch: Option<usize>) -> Self {
        Self {
            method: r.method.clone(),
            train_scale,
            batch,
            dataset_scale,
            seed: r.config.seed,
            problems: r.runtimes.len(),
            rounds: r.rounds.len(),
            feasible_rounds: r.rounds.iter().filter(|x| x.feasible()).count(),
            adjusted_makespan: r.adjusted_makespan(),
            runtime: r.mean_runtime(),
        }
    }

    pub fn feasibility(&self) -> f64 {
        if self.rounds == 0 {
            0.0
        } else {
            self.feasible_rounds as f64 / self.rounds as f64
        }
    }
}

/// Pooled statistics over the seeds of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub train_scale: Option<Scale>,
    pub batch: Option<usize>,
    pub dataset_scale: Scale,
    pub seeds: usize,
    pub adjusted_makespan_mean: f64,
    pub adjusted_makespan_sem: Option<f64>,
    /// Percent.
    pub feasibility_mean: f64,
    pub feasibility_sem: Option<f64>,
    /// Seconds per problem.
    pub runtime_mean: f64,
    pub runtime_sd: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; `None` for fewer than two values.
fn sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some((xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

fn sem(xs: &[f64]) -> Option<f64> {
    sd(xs).map(|s| s / (xs.len() as f64).sqrt())
}

type GroupKey = (Scale, String, Option<Scale>, Option<usize>);

/// Groups runs by configuration and pools across seeds. Rows come out sorted
/// by dataset scale, then method.
pub fn report(runs: &[RunSummary]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        groups
            .entry((r.dataset_scale, r.method.clone(), r.train_scale, r.batch))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((dataset_scale, method, train_scale, batch), rs)| {
            let mk: Vec<f64> = rs.iter().map(|r| r.adjusted_makespan).collect();
            let feas: Vec<f64> = rs.iter().map(|r| 100.0 * r.feasibility()).collect();
            let rt: Vec<f64> = rs.iter().map(|r| r.runtime).collect();
            ReportRow {
                method,
                train_scale,
                batch,
                dataset_scale,
                seeds: rs.len(),
                adjusted_makespan_mean: mean(&mk),
                adjusted_makespan_sem: sem(&mk),
                feasibility_mean: mean(&feas),
                feasibility_sem: sem(&feas),
                runtime_mean: mean(&rt),
                runtime_sd: sd(&rt),
            }
        })
        .collect()
}

/// Appends `runs` to a summary CSV, writing the header only for a new file.
pub fn append_summaries(path: &Path, runs: &[RunSummary]) -> Result<(), BenchError> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in runs {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summaries(path: &Path) -> Result<Vec<RunSummary>, BenchError> {
    let mut rd = csv::Reader::from_path(path)?;
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn pm(mean: f64, spread: Option<f64>, digits: usize) -> String {
    match spread {
        Some(s) => format!("{mean:.digits$} ± {s:.digits$}"),
        None => format!("{mean:.digits$}"),
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "-".into(), |v| v.to_string())
}

/// Fixed-width text table of `rows`.
pub fn render_table(rows: &[ReportRow]) -> String {
    let header = ["dataset", "method", "trained", "batch", "seeds", "adj. makespan", "feasible %", "runtime s"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset_scale.to_string(),
                r.method.clone(),
                opt(r.train_scale),
                opt(r.batch),
                r.seeds.to_string(),
                pm(r.adjusted_makespan_mean, r.adjusted_makespan_sem, 2),
                pm(r.feasibility_mean, r.feasibility_sem, 2),
                pm(r.runtime_mean, r.runtime_sd, 4),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &body {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
