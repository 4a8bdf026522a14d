//! Evaluation: sample conditional generations and score each with the
//! synchronization oracle.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::flowcore::{sample_ode_batch, JointLayout, Velocity};
use crate::rng::stream;
use crate::toyworld::World;

/// Aggregates over one evaluation set. Degenerate generations (no usable
/// onset envelope) are excluded from the means and counted separately.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub n_degenerate: usize,
    pub mean_abs_offset: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalRow {
    pub index: usize,
    pub class_id: usize,
    pub offset: f64,
    pub score: f64,
    pub degenerate: bool,
}

const EVAL_CHUNK: usize = 64;

/// Generate `n` samples (classes drawn uniformly) and measure each. The
/// caller picks the parameter set (raw vs EMA) by the model it passes.
pub fn evaluate_model<M: Velocity>(
    model: &M,
    world: &World,
    n: usize,
    seed: u64,
    ode_steps: usize,
) -> Result<(EvalSummary, Vec<EvalRow>)> {
    if n == 0 {
        return Err(Error::Config("evaluation needs n >= 1".into()));
    }
    let layout = JointLayout::from_world(world.config());
    if layout.dim() != model.state_dim() {
        return Err(Error::Config(format!(
            "model state dim {} does not match world layout {}",
            model.state_dim(),
            layout.dim()
        )));
    }
    let classes = world.config().classes;
    let mut rng = stream(seed, "eval");
    let mut rows = Vec::with_capacity(n);
    let mut index = 0;
    while index < n {
        let chunk = EVAL_CHUNK.min(n - index);
        let mut conds = Array2::zeros((chunk, classes));
        let mut class_ids = Vec::with_capacity(chunk);
        for i in 0..chunk {
            let class = rng.gen_range(0..classes);
            class_ids.push(class);
            conds[[i, class]] = 1.0;
        }
        let states = sample_ode_batch(model, &conds, &mut rng, ode_steps)?;
        for i in 0..chunk {
            let (video, audio) = layout.unpack(&states.row(i).to_vec(), world.config())?;
            let m = world.measure_offset(&video, &audio);
            rows.push(EvalRow {
                index: index + i,
                class_id: class_ids[i],
                offset: m.offset,
                score: m.score,
                degenerate: m.degenerate,
            });
        }
        index += chunk;
    }
    Ok((summarize(&rows), rows))
}

pub fn summarize(rows: &[EvalRow]) -> EvalSummary {
    let valid: Vec<&EvalRow> = rows.iter().filter(|r| !r.degenerate).collect();
    let n_degenerate = rows.len() - valid.len();
    let (mean_abs_offset, mean_score) = if valid.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            valid.iter().map(|r| r.offset.abs()).sum::<f64>() / valid.len() as f64,
            valid.iter().map(|r| r.score).sum::<f64>() / valid.len() as f64,
        )
    };
    EvalSummary {
        n: rows.len(),
        n_degenerate,
        mean_abs_offset,
        mean_score,
    }
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut out = String::from("index,class_id,offset,score,degenerate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.index, r.class_id, r.offset, r.score, r.degenerate as u8
        ));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowcore::{ModelConfig, VelocityField};

    #[test]
    fn zero_n_rejected() {
        let world = World::default();
        let model = VelocityField::zeros(ModelConfig::default());
        assert!(evaluate_model(&model, &world, 0, 1, 4).is_err());
    }

    #[test]
    fn untrained_model_matches_shuffled_pair_baseline() {
        // An untrained (zero) model generates pure noise; its offset
        // distribution should be statistically indistinguishable from
        // scoring mismatched real pairs.
        let world = World::default();
        let model = VelocityField::init(ModelConfig::default(), &mut stream(1, "init"));
        let (summary, rows) = evaluate_model(&model, &world, 150, 7, 8).unwrap();
        assert_eq!(summary.n, 150);

        let mut rng = stream(2, "shuffle");
        let pairs: Vec<_> = (0..151).map(|_| world.make_pair(&mut rng)).collect();
        let baseline: Vec<f64> = (0..150)
            .map(|i| {
                world
                    .measure_offset(&pairs[i].video, &pairs[i + 1].audio)
                    .offset
                    .abs()
            })
            .collect();

        let model_offsets: Vec<f64> = rows
            .iter()
            .filter(|r| !r.degenerate)
            .map(|r| r.offset.abs())
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
        };
        let m1 = mean(&model_offsets);
        let m2 = mean(&baseline);
        let se = (var(&model_offsets) / model_offsets.len() as f64
            + var(&baseline) / baseline.len() as f64)
            .sqrt();
        assert!(
            (m1 - m2).abs() <= 4.0 * se,
            "untrained mean {m1} vs shuffled baseline {m2} (se {se})"
        );
    }

    #[test]
    fn eval_is_deterministic_given_seed() {
        let world = World::default();
        let model = VelocityField::init(ModelConfig::default(), &mut stream(3, "init"));
        let (a, _) = evaluate_model(&model, &world, 32, 11, 6).unwrap();
        let (b, _) = evaluate_model(&model, &world, 32, 11, 6).unwrap();
        assert_eq!(a, b);
    }
}
