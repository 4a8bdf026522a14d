//! Gradient-norm-ratio diagnostic: distribution of ||grad z|| / ||grad mse||
//! over fresh (positive, replace-negative) pairs with shared noise draws.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flowcore::{JointLayout, Velocity, VelocityField};
use crate::negatives::{construct_negative, NegativeContext, PerturbationKind};
use crate::prefloss::{grad_norm_ratio, RatioSample};
use crate::rng::stream;
use crate::toyworld::World;

/// Distribution summary; degenerate draws are excluded and counted.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DiagSummary {
    pub n: usize,
    pub n_degenerate: usize,
    pub median_ratio: f64,
    pub fraction_above_one: f64,
}

/// Run the diagnostic for `n` draws on a model snapshot. Positives come from
/// freshly rendered pairs; each negative replaces one modality from another
/// pair in the same pool.
pub fn diag_gradnorm(
    model: &VelocityField,
    world: &World,
    n: usize,
    seed: u64,
) -> Result<(DiagSummary, Vec<RatioSample>)> {
    if n == 0 {
        return Err(Error::Config("diagnostic needs n >= 1".into()));
    }
    let layout = JointLayout::from_world(world.config());
    if layout.dim() != model.state_dim() {
        return Err(Error::Config(format!(
            "model state dim {} does not match world layout {}",
            model.state_dim(),
            layout.dim()
        )));
    }
    let mut pool_rng = stream(seed, "diag-pool");
    let pool: Vec<_> = (0..n.max(2)).map(|_| world.make_pair(&mut pool_rng)).collect();
    let ctx = NegativeContext {
        pool: Some(&pool),
        synth: None,
    };
    let mut rng = stream(seed, "diag");
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let parent = &pool[i % pool.len()];
        let negative = construct_negative(parent, i % pool.len(), PerturbationKind::Replace, &ctx, &mut rng)?;
        let winner = layout.pack(parent)?;
        let loser = layout.pack(&negative.pair)?;
        let cond: Vec<f64> = parent.condition.iter().map(|&v| v as f64).collect();
        samples.push(grad_norm_ratio(model, &winner, &loser, &cond, &mut rng)?);
    }
    Ok((summarize(&samples), samples))
}

pub fn summarize(samples: &[RatioSample]) -> DiagSummary {
    let valid: Vec<f64> = samples
        .iter()
        .filter(|s| !s.degenerate)
        .map(|s| s.ratio)
        .collect();
    let n_degenerate = samples.len() - valid.len();
    let median_ratio = super::compare::median(&valid);
    let fraction_above_one = if valid.is_empty() {
        f64::NAN
    } else {
        valid.iter().filter(|&&r| r > 1.0).count() as f64 / valid.len() as f64
    };
    DiagSummary {
        n: samples.len(),
        n_degenerate,
        median_ratio,
        fraction_above_one,
    }
}

pub fn write_diag_csv(path: &Path, samples: &[RatioSample]) -> Result<()> {
    let mut out = String::from("sample_index,ratio,z,winner_mse\n");
    for (i, s) in samples.iter().enumerate() {
        if s.degenerate {
            continue;
        }
        out.push_str(&format!("{},{},{},{}\n", i, s.ratio, s.z, s.winner_mse));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
