//! Trainers for the three methods.
//!
//! - sft: Adam on the flow-matching loss over dataset positives.
//! - dpo: preference pairs built per step by sampling `n_candidates`
//!   generations from the frozen reference and ranking them with the oracle.
//! - syncdpo: preference pairs built per step by perturbing dataset
//!   positives; the negative kind comes from the curriculum schedule, one of
//!   its fixed-probability variants, or a fixed-kind ablation override.
//!
//! All methods share the loop: warmup+cosine LR, decoupled-weight-decay
//! Adam, an EMA shadow updated after every step, metrics rows at a fixed
//! cadence, and periodic checkpoints. Runs are deterministic given
//! (config, seed, dataset); wall-clock numbers stay out of metrics.csv.
//!
//! Preference runs start from the reference parameters unless an explicit
//! init checkpoint is given; checkpoints provide starting weights only, the
//! optimizer and EMA always start fresh.

use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;

use super::config::{CurriculumMode, Method, TrainConfig};
use super::eval::{evaluate_model, write_eval_csv};
use super::manifest::{
    sha256_f64_sequence, sha256_file, write_metrics_csv, write_timings_csv, DatasetFingerprint,
    MetricsRow, RunManifest, MANIFEST_FORMAT_VERSION,
};
use super::optim::{ema_update, lr_at, AdamConfig, AdamState};
use crate::curriculum::{sample_kind, sampling_probs, CurriculumConfig};
use crate::error::{Error, Result};
use crate::flowcore::{
    fm_loss, fm_loss_value, Checkpoint, FMBatch, JointLayout, ModelConfig, VelocityField,
};
use crate::negatives::{
    build_vanilla_dpo_pair, construct_negative, NegativeContext, PerturbationKind, SynthCtx,
};
use crate::prefloss::{syncdpo_loss, LossConfig, PreferenceBatch};
use crate::rng::stream;
use crate::toyworld::{Dataset, PairSample, World};

/// Where a finished run left its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub final_checkpoint: PathBuf,
    pub manifest: RunManifest,
}

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate_built()?;
    let dataset = Dataset::load(&cfg.dataset)?;
    let fingerprint = DatasetFingerprint {
        sha256: sha256_file(&cfg.dataset)?,
        n: dataset.manifest().n,
        seed: dataset.manifest().seed,
    };
    let world = World::new(dataset.manifest().world_config());
    let layout = JointLayout::from_world(world.config());

    // Train/validation split: the trailing fraction is held out.
    let n_total = dataset.len();
    let n_val = ((n_total as f64) * cfg.val_fraction).round() as usize;
    let n_train = n_total - n_val;
    if n_train == 0 {
        return Err(Error::Config("no training samples after split".into()));
    }
    let train_pairs: &[PairSample] = &dataset.pairs()[..n_train];
    let val_pairs: &[PairSample] = &dataset.pairs()[n_train..];

    let train_states: Vec<Vec<f64>> = train_pairs
        .iter()
        .map(|p| layout.pack(p))
        .collect::<Result<_>>()?;
    let train_conds: Vec<Vec<f64>> = train_pairs
        .iter()
        .map(|p| p.condition.iter().map(|&v| v as f64).collect())
        .collect();

    // Fixed validation batch: one (x0, t) draw frozen for the whole run so
    // the validation loss is comparable across steps.
    let val_batch = if val_pairs.is_empty() {
        None
    } else {
        let take = val_pairs.len().min(128);
        let states: Vec<Vec<f64>> = val_pairs[..take]
            .iter()
            .map(|p| layout.pack(p))
            .collect::<Result<_>>()?;
        let conds: Vec<Vec<f64>> = val_pairs[..take]
            .iter()
            .map(|p| p.condition.iter().map(|&v| v as f64).collect())
            .collect();
        Some(FMBatch::draw(states, conds, &mut stream(cfg.seed, "val")))
    };

    let default_arch = ModelConfig {
        state_dim: layout.dim(),
        cond_dim: world.config().classes,
        ..ModelConfig::default()
    };

    // Frozen reference for preference methods; also the default init.
    let reference: Option<VelocityField> = match &cfg.ref_checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            check_arch(ckpt.model.config(), &default_arch, "reference")?;
            Some(ckpt.model.frozen())
        }
        None => None,
    };
    let reference_snapshot: Option<Vec<f64>> = reference.as_ref().map(|r| r.params().to_vec());

    let mut model = match &cfg.init_checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            check_arch(ckpt.model.config(), &default_arch, "init")?;
            VelocityField::from_params(*ckpt.model.config(), ckpt.model.params().to_vec())
        }
        None => match &reference {
            Some(r) => VelocityField::from_params(*r.config(), r.params().to_vec()),
            None => VelocityField::init(default_arch, &mut stream(cfg.seed, "init")),
        },
    };

    let adam_cfg = AdamConfig {
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        epsilon: cfg.adam_epsilon,
        weight_decay: cfg.weight_decay,
    };
    let mut adam = AdamState::new(model.param_count());
    let mut ema = model.params().to_vec();
    let loss_cfg = LossConfig::new(cfg.beta)?;
    let config_echo = serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))?;

    let run_dir = cfg.out_dir.clone();
    let ckpt_dir = run_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;

    let mut order_rng = stream(cfg.seed, "order");
    let mut noise_rng = stream(cfg.seed, "noise");
    let mut neg_rng = stream(cfg.seed, "negatives");
    let mut cand_rng = stream(cfg.seed, "candidates");

    let curriculum_cfg = CurriculumConfig::new(cfg.curriculum_rate(), cfg.steps);
    let mut sampler_calls: u64 = 0;
    let mut pairs_skipped: u64 = 0;
    let mut first_train_loss = f64::NAN;
    let mut rows: Vec<MetricsRow> = Vec::new();
    let started = Instant::now();
    let mut step_time_total = 0.0f64;

    let emit_row = |rows: &mut Vec<MetricsRow>,
                    step: u64,
                    train_loss: f64,
                    model_ema: &VelocityField,
                    started: &Instant|
     -> Result<()> {
        let val_fm_loss = val_batch
            .as_ref()
            .map(|b| fm_loss_value(model_ema, b))
            .unwrap_or(f64::NAN);
        let eval_seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(step);
        let (summary, _) =
            evaluate_model(model_ema, &world, cfg.eval_n, eval_seed, cfg.ode_steps)?;
        rows.push(MetricsRow {
            step,
            train_loss,
            val_fm_loss,
            mean_abs_offset: summary.mean_abs_offset,
            mean_score: summary.mean_score,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
        write_metrics_csv(&run_dir.join("metrics.csv"), rows)?;
        write_timings_csv(&run_dir.join("timings.csv"), rows)?;
        Ok(())
    };

    emit_row(
        &mut rows,
        0,
        f64::NAN,
        &VelocityField::from_params(*model.config(), ema.clone()),
        &started,
    )?;

    for step in 0..cfg.steps {
        let step_start = Instant::now();

        let step_result: Result<(f64, Vec<f64>)> = match cfg.method {
            Method::Sft => {
                let idxs: Vec<usize> = (0..cfg.batch_size)
                    .map(|_| order_rng.gen_range(0..n_train))
                    .collect();
                let x1: Vec<Vec<f64>> = idxs.iter().map(|&i| train_states[i].clone()).collect();
                let conds: Vec<Vec<f64>> = idxs.iter().map(|&i| train_conds[i].clone()).collect();
                let batch = FMBatch::draw(x1, conds, &mut noise_rng);
                fm_loss(&model, &batch)
            }
            Method::Syncdpo => {
                let reference = reference.as_ref().expect("validated");
                let synth_ctx = SynthCtx {
                    model: reference,
                    layout,
                    world: &world,
                    ode_steps: cfg.ode_steps,
                };
                let ctx = NegativeContext {
                    pool: Some(train_pairs),
                    synth: Some(synth_ctx),
                };
                let mut winners = Vec::with_capacity(cfg.batch_size);
                let mut losers = Vec::with_capacity(cfg.batch_size);
                let mut conds = Vec::with_capacity(cfg.batch_size);
                for _ in 0..cfg.batch_size {
                    let idx = order_rng.gen_range(0..n_train);
                    let kind = pick_kind(cfg, step, &curriculum_cfg, &mut neg_rng);
                    if kind == PerturbationKind::Synthesize {
                        sampler_calls += 1;
                    }
                    let negative =
                        construct_negative(&train_pairs[idx], idx, kind, &ctx, &mut neg_rng)?;
                    winners.push(train_states[idx].clone());
                    losers.push(layout.pack(&negative.pair)?);
                    conds.push(train_conds[idx].clone());
                }
                let batch = PreferenceBatch::draw(winners, losers, conds, &mut noise_rng);
                syncdpo_loss(&model, reference, &batch, &loss_cfg)
            }
            Method::Dpo => {
                let reference = reference.as_ref().expect("validated");
                let mut winners = Vec::new();
                let mut losers = Vec::new();
                let mut conds = Vec::new();
                for _ in 0..cfg.batch_size {
                    let idx = order_rng.gen_range(0..n_train);
                    let cond = &train_conds[idx];
                    sampler_calls += cfg.n_candidates as u64;
                    match build_vanilla_dpo_pair(
                        reference,
                        &world,
                        &layout,
                        cond,
                        &mut cand_rng,
                        cfg.n_candidates,
                        cfg.ode_steps,
                    )? {
                        Some(pair) => {
                            winners.push(pair.winner);
                            losers.push(pair.loser);
                            conds.push(cond.clone());
                        }
                        None => pairs_skipped += 1,
                    }
                }
                if winners.is_empty() {
                    Err(Error::Numerical(format!(
                        "step {step}: every candidate set was degenerate; no preference pairs"
                    )))
                } else {
                    let batch = PreferenceBatch::draw(winners, losers, conds, &mut noise_rng);
                    syncdpo_loss(&model, reference, &batch, &loss_cfg)
                }
            }
        };

        let (loss, grad) = match step_result {
            Ok(ok) => ok,
            Err(e) => {
                let crash = Checkpoint {
                    model: model.clone(),
                    ema: ema.clone(),
                    adam_m: adam.m.clone(),
                    adam_v: adam.v.clone(),
                    adam_t: adam.t,
                    step,
                    config_echo: config_echo.clone(),
                };
                let crash_path = ckpt_dir.join(format!("crash_step_{step:06}.ckpt"));
                crash.save(&crash_path)?;
                return Err(Error::Numerical(format!(
                    "training aborted at step {step} ({e}); crash checkpoint at {}",
                    crash_path.display()
                )));
            }
        };
        if step == 0 {
            first_train_loss = loss;
        }

        let lr = lr_at(step, cfg.learning_rate, cfg.warmup_steps, cfg.steps);
        adam.step(model.params_mut(), &grad, lr, &adam_cfg);
        ema_update(&mut ema, model.params(), cfg.ema_decay);
        step_time_total += step_start.elapsed().as_secs_f64();

        let done = step + 1;
        if done % cfg.checkpoint_every == 0 && done != cfg.steps {
            save_checkpoint(&ckpt_dir, done, &model, &ema, &adam, &config_echo)?;
        }
        if done % cfg.eval_every == 0 || done == cfg.steps {
            let model_ema = VelocityField::from_params(*model.config(), ema.clone());
            emit_row(&mut rows, done, loss, &model_ema, &started)?;
        }
    }

    // The reference must come through training bitwise unchanged.
    if let (Some(reference), Some(snapshot)) = (&reference, &reference_snapshot) {
        if reference.params() != snapshot.as_slice() {
            return Err(Error::Numerical("reference parameters changed".into()));
        }
    }

    let final_checkpoint = save_checkpoint(&ckpt_dir, cfg.steps, &model, &ema, &adam, &config_echo)?;

    // Final evaluation rows for the run directory.
    {
        let model_ema = VelocityField::from_params(*model.config(), ema.clone());
        let eval_seed = cfg.seed.wrapping_mul(1_000_003).wrapping_add(cfg.steps);
        let (_, eval_rows) =
            evaluate_model(&model_ema, &world, cfg.eval_n, eval_seed, cfg.ode_steps)?;
        write_eval_csv(
            &run_dir.join("eval").join(format!("step_{:06}.csv", cfg.steps)),
            &eval_rows,
        )?;
    }

    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        dataset_fingerprint: fingerprint,
        curriculum_digest: curriculum_digest(cfg),
        sampler_calls,
        pairs_skipped,
        steps_completed: cfg.steps,
        first_train_loss,
        avg_step_ms: if cfg.steps > 0 {
            step_time_total * 1000.0 / cfg.steps as f64
        } else {
            0.0
        },
        total_wall_s: started.elapsed().as_secs_f64(),
        final_metrics: rows.last().copied(),
    };
    manifest.save(&run_dir.join("manifest.json"))?;

    Ok(TrainOutcome {
        run_dir,
        final_checkpoint,
        manifest,
    })
}

fn check_arch(got: &ModelConfig, expected: &ModelConfig, role: &str) -> Result<()> {
    if got.state_dim != expected.state_dim || got.cond_dim != expected.cond_dim {
        return Err(Error::Config(format!(
            "{role} checkpoint has state/cond dims {}x{}, dataset expects {}x{}",
            got.state_dim, got.cond_dim, expected.state_dim, expected.cond_dim
        )));
    }
    Ok(())
}

fn pick_kind<R: Rng>(
    cfg: &TrainConfig,
    step: u64,
    schedule: &CurriculumConfig,
    rng: &mut R,
) -> PerturbationKind {
    if let Some(kind) = cfg.negative_kind {
        return kind;
    }
    match cfg.curriculum_mode {
        CurriculumMode::Curriculum => sample_kind(step, schedule, rng),
        CurriculumMode::Uniform => sample_kind(step, &CurriculumConfig::new(0.0, cfg.steps), rng),
        CurriculumMode::ScaleOnly => PerturbationKind::Scale,
        CurriculumMode::ReplaceOnly => PerturbationKind::Replace,
    }
}

/// p_replace actually in force at each step, when the run samples kinds from
/// the replace/scale family.
fn curriculum_digest(cfg: &TrainConfig) -> Option<String> {
    if cfg.method != Method::Syncdpo || cfg.negative_kind.is_some() {
        return None;
    }
    let p_at = |step: u64| -> f64 {
        match cfg.curriculum_mode {
            CurriculumMode::Curriculum => {
                sampling_probs(step, &CurriculumConfig::new(cfg.curriculum_rate(), cfg.steps)).0
            }
            CurriculumMode::Uniform => 0.5,
            CurriculumMode::ScaleOnly => 0.0,
            CurriculumMode::ReplaceOnly => 1.0,
        }
    };
    Some(sha256_f64_sequence((0..cfg.steps).map(p_at)))
}

fn save_checkpoint(
    ckpt_dir: &std::path::Path,
    step: u64,
    model: &VelocityField,
    ema: &[f64],
    adam: &AdamState,
    config_echo: &serde_json::Value,
) -> Result<PathBuf> {
    let ckpt = Checkpoint {
        model: model.clone(),
        ema: ema.to_vec(),
        adam_m: adam.m.clone(),
        adam_v: adam.v.clone(),
        adam_t: adam.t,
        step,
        config_echo: config_echo.clone(),
    };
    let path = ckpt_dir.join(format!("step_{step:06}.ckpt"));
    ckpt.save(&path)?;
    Ok(path)
}
