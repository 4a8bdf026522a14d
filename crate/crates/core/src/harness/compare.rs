//! Cross-run comparison: align finished runs into a method x metric table
//! with per-seed rows and per-method medians.

use std::path::{Path, PathBuf};

use super::manifest::{read_metrics_csv, RunManifest};
use crate::error::{Error, Result};

/// Final numbers extracted from one run directory.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub method: String,
    pub seed: u64,
    pub steps: u64,
    pub val_fm_loss: f64,
    pub mean_abs_offset: f64,
    pub mean_score: f64,
    pub sampler_calls: u64,
    pub avg_step_ms: f64,
    pub total_wall_s: f64,
}

/// Per-method medians over seeds.
#[derive(Debug, Clone)]
pub struct MethodMedians {
    pub method: String,
    pub runs: usize,
    pub val_fm_loss: f64,
    pub mean_abs_offset: f64,
    pub mean_score: f64,
    pub sampler_calls: f64,
    pub avg_step_ms: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<RunSummary>,
    pub medians: Vec<MethodMedians>,
}

pub fn summarize_run(run_dir: &Path) -> Result<RunSummary> {
    let manifest = RunManifest::load(&run_dir.join("manifest.json"))?;
    let metrics = read_metrics_csv(&run_dir.join("metrics.csv"))?;
    let last = metrics
        .last()
        .ok_or_else(|| Error::Format(format!("{}: empty metrics.csv", run_dir.display())))?;
    Ok(RunSummary {
        run_dir: run_dir.to_path_buf(),
        method: manifest.config.method.name().to_string(),
        seed: manifest.config.seed,
        steps: manifest.steps_completed,
        val_fm_loss: last.val_fm_loss,
        mean_abs_offset: last.mean_abs_offset,
        mean_score: last.mean_score,
        sampler_calls: manifest.sampler_calls,
        avg_step_ms: manifest.avg_step_ms,
        total_wall_s: manifest.total_wall_s,
    })
}

pub fn compare(run_dirs: &[PathBuf]) -> Result<CompareReport> {
    if run_dirs.len() < 2 {
        return Err(Error::Config("compare needs at least 2 run directories".into()));
    }
    let mut rows: Vec<RunSummary> = run_dirs
        .iter()
        .map(|d| summarize_run(d))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| (a.method.as_str(), a.seed).cmp(&(b.method.as_str(), b.seed)));

    let mut medians = Vec::new();
    let mut methods: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    methods.dedup();
    for method in methods {
        let group: Vec<&RunSummary> = rows.iter().filter(|r| r.method == method).collect();
        let collect = |f: &dyn Fn(&RunSummary) -> f64| -> Vec<f64> {
            group.iter().map(|r| f(r)).collect()
        };
        medians.push(MethodMedians {
            method,
            runs: group.len(),
            val_fm_loss: median(&collect(&|r| r.val_fm_loss)),
            mean_abs_offset: median(&collect(&|r| r.mean_abs_offset)),
            mean_score: median(&collect(&|r| r.mean_score)),
            sampler_calls: median(&collect(&|r| r.sampler_calls as f64)),
            avg_step_ms: median(&collect(&|r| r.avg_step_ms)),
        });
    }
    Ok(CompareReport { rows, medians })
}

/// Standard median: middle element, or the mean of the two middles.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kind,method,seed,steps,val_fm_loss,mean_abs_offset,mean_score,sampler_calls,avg_step_ms,total_wall_s\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "run,{},{},{},{},{},{},{},{},{}\n",
                r.method,
                r.seed,
                r.steps,
                r.val_fm_loss,
                r.mean_abs_offset,
                r.mean_score,
                r.sampler_calls,
                r.avg_step_ms,
                r.total_wall_s
            ));
        }
        for m in &self.medians {
            out.push_str(&format!(
                "median,{},runs={},,{},{},{},{},{},\n",
                m.method, m.runs, m.val_fm_loss, m.mean_abs_offset, m.mean_score, m.sampler_calls, m.avg_step_ms
            ));
        }
        out
    }

    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>6} {:>8} {:>14} {:>16} {:>12} {:>14} {:>12}\n",
            "method", "seed", "steps", "val_fm_loss", "mean_abs_offset", "mean_score", "sampler_calls", "avg_step_ms"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>6} {:>8} {:>14.6} {:>16.6} {:>12.6} {:>14} {:>12.3}\n",
                r.method,
                r.seed,
                r.steps,
                r.val_fm_loss,
                r.mean_abs_offset,
                r.mean_score,
                r.sampler_calls,
                r.avg_step_ms
            ));
        }
        out.push('\n');
        out.push_str("medians over seeds:\n");
        for m in &self.medians {
            out.push_str(&format!(
                "{:<10} {:>6} {:>8} {:>14.6} {:>16.6} {:>12.6} {:>14.1} {:>12.3}\n",
                m.method, m.runs, "", m.val_fm_loss, m.mean_abs_offset, m.mean_score, m.sampler_calls, m.avg_step_ms
            ));
        }
        out
    }
}
