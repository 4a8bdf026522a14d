//! Run artifacts: the metrics table, per-row timings, and the run manifest.
//!
//! metrics.csv holds only values that are pure functions of
//! (config, seed, dataset), so identical runs produce identical bytes. Wall
//! times go to timings.csv and the manifest instead.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// One metrics row. `wall_time_s` is reported in timings.csv, never in
/// metrics.csv.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub train_loss: f64,
    pub val_fm_loss: f64,
    pub mean_abs_offset: f64,
    pub mean_score: f64,
    pub wall_time_s: f64,
}

pub const METRICS_HEADER: &str = "step,train_loss,val_fm_loss,mean_abs_offset,mean_score";

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.train_loss, r.val_fm_loss, r.mean_abs_offset, r.mean_score
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_timings_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::from("step,wall_time_s\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.step, r.wall_time_s));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if i == 0 {
            if line != METRICS_HEADER {
                return Err(Error::Format(format!(
                    "{}: unexpected metrics header '{line}'",
                    path.display()
                )));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "{}: line {} has {} fields",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad number '{s}' in {}", path.display())))
        };
        rows.push(MetricsRow {
            step: fields[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad step '{}'", fields[0])))?,
            train_loss: num(fields[1])?,
            val_fm_loss: num(fields[2])?,
            mean_abs_offset: num(fields[3])?,
            mean_score: num(fields[4])?,
            wall_time_s: f64::NAN,
        });
    }
    Ok(rows)
}

/// Identity of the dataset a run consumed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub sha256: String,
    pub n: usize,
    pub seed: u64,
}

/// Everything needed to reproduce and compare a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub code_version: String,
    pub config: TrainConfig,
    pub dataset_fingerprint: DatasetFingerprint,
    /// SHA-256 over the little-endian p_replace sequence actually in force,
    /// one value per step; preference runs only.
    pub curriculum_digest: Option<String>,
    /// Generation-sampler invocations during training.
    pub sampler_calls: u64,
    /// Preference pairs skipped because every candidate was degenerate.
    pub pairs_skipped: u64,
    pub steps_completed: u64,
    /// Training loss observed at the first optimizer step.
    pub first_train_loss: f64,
    pub avg_step_ms: f64,
    pub total_wall_s: f64,
    pub final_metrics: Option<MetricsRow>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&content)
            .map_err(|e| Error::Format(format!("{}: bad manifest: {e}", path.display())))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn sha256_f64_sequence(values: impl Iterator<Item = f64>) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![
            MetricsRow {
                step: 0,
                train_loss: f64::NAN,
                val_fm_loss: 12.5,
                mean_abs_offset: 1.25,
                mean_score: 0.01,
                wall_time_s: 0.0,
            },
            MetricsRow {
                step: 250,
                train_loss: 3.5,
                val_fm_loss: 6.25,
                mean_abs_offset: 0.5,
                mean_score: 0.4,
                wall_time_s: 1.5,
            },
        ];
        write_metrics_csv(&path, &rows).unwrap();
        let loaded = read_metrics_csv(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert!(loaded[0].train_loss.is_nan());
        assert_eq!(loaded[1].val_fm_loss, 6.25);
        assert_eq!(loaded[1].step, 250);
    }

    #[test]
    fn digest_is_order_sensitive() {
        let a = sha256_f64_sequence([0.5, 0.25].into_iter());
        let b = sha256_f64_sequence([0.25, 0.5].into_iter());
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
    }
}
