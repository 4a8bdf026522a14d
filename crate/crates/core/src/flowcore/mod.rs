//! Conditional flow matching on the joint video+audio state.
//!
//! States live in R^N with the video block first (row-major time x channel),
//! then the audio block. The interpolant is the straight line
//! x_t = (1-t) x0 + t x1 and the regression target is x1 - x0.

mod checkpoint;
mod model;
mod sampler;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use model::{ModelConfig, Velocity, VelocityField};
pub use sampler::{sample_ode, sample_ode_batch, sample_tracks};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::toyworld::{Modality, ModalityTrack, PairSample, WorldConfig};

/// Packing layout of the joint latent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointLayout {
    pub video_len: usize,
    pub video_channels: usize,
    pub audio_len: usize,
    pub audio_channels: usize,
}

impl JointLayout {
    pub fn from_world(cfg: &WorldConfig) -> Self {
        JointLayout {
            video_len: cfg.video_len(),
            video_channels: cfg.video_channels,
            audio_len: cfg.audio_len(),
            audio_channels: cfg.audio_channels,
        }
    }

    pub fn video_dim(&self) -> usize {
        self.video_len * self.video_channels
    }

    pub fn audio_dim(&self) -> usize {
        self.audio_len * self.audio_channels
    }

    /// Total state dimension N.
    pub fn dim(&self) -> usize {
        self.video_dim() + self.audio_dim()
    }

    /// Index range of the video block within a packed state.
    pub fn video_block(&self) -> std::ops::Range<usize> {
        0..self.video_dim()
    }

    /// Index range of the audio block within a packed state.
    pub fn audio_block(&self) -> std::ops::Range<usize> {
        self.video_dim()..self.dim()
    }

    /// Flatten a pair into a state vector: video samples first (time-major),
    /// then audio. Video frame 0 channel 0 maps to index 0.
    pub fn pack(&self, pair: &PairSample) -> Result<Vec<f64>> {
        self.pack_tracks(&pair.video, &pair.audio)
    }

    pub fn pack_tracks(&self, video: &ModalityTrack, audio: &ModalityTrack) -> Result<Vec<f64>> {
        if video.samples.len() != self.video_dim() || audio.samples.len() != self.audio_dim() {
            return Err(Error::Config(format!(
                "track sizes {}+{} do not match layout {}+{}",
                video.samples.len(),
                audio.samples.len(),
                self.video_dim(),
                self.audio_dim()
            )));
        }
        let mut state = Vec::with_capacity(self.dim());
        state.extend(video.samples.iter().map(|&v| v as f64));
        state.extend(audio.samples.iter().map(|&v| v as f64));
        Ok(state)
    }

    /// Inverse of `pack`: split a state back into pair-shaped tracks.
    pub fn unpack(&self, state: &[f64], cfg: &WorldConfig) -> Result<(ModalityTrack, ModalityTrack)> {
        if state.len() != self.dim() {
            return Err(Error::Config(format!(
                "state length {} does not match layout dim {}",
                state.len(),
                self.dim()
            )));
        }
        let video = ModalityTrack {
            samples: state[self.video_block()].iter().map(|&v| v as f32).collect(),
            len: self.video_len,
            channels: self.video_channels,
            rate: cfg.video_rate,
            modality: Modality::Video,
        };
        let audio = ModalityTrack {
            samples: state[self.audio_block()].iter().map(|&v| v as f32).collect(),
            len: self.audio_len,
            channels: self.audio_channels,
            rate: cfg.audio_rate,
            modality: Modality::Audio,
        };
        Ok((video, audio))
    }
}

/// x_t = (1-t) x0 + t x1.
pub fn interpolate(x0: &[f64], x1: &[f64], t: f64) -> Vec<f64> {
    assert_eq!(x0.len(), x1.len());
    assert!((0.0..=1.0).contains(&t), "t must be in [0, 1]");
    x0.iter()
        .zip(x1)
        .map(|(&a, &b)| (1.0 - t) * a + t * b)
        .collect()
}

/// The flow-matching regression target x1 - x0.
pub fn target_velocity(x0: &[f64], x1: &[f64]) -> Vec<f64> {
    assert_eq!(x0.len(), x1.len());
    x0.iter().zip(x1).map(|(&a, &b)| b - a).collect()
}

/// A flow-matching training batch: data states, conditions, noise, timesteps.
#[derive(Debug, Clone)]
pub struct FMBatch {
    pub x1: Array2<f64>,
    pub cond: Array2<f64>,
    pub x0: Array2<f64>,
    pub t: Vec<f64>,
}

impl FMBatch {
    /// Assemble a batch from packed data states, drawing x0 ~ N(0, I) and
    /// t ~ U[0, 1] per sample.
    pub fn draw<R: Rng>(x1_rows: Vec<Vec<f64>>, cond_rows: Vec<Vec<f64>>, rng: &mut R) -> Self {
        let b = x1_rows.len();
        assert!(b > 0 && cond_rows.len() == b);
        let n = x1_rows[0].len();
        let c = cond_rows[0].len();
        let mut x1 = Array2::zeros((b, n));
        let mut cond = Array2::zeros((b, c));
        let mut x0 = Array2::zeros((b, n));
        let mut t = Vec::with_capacity(b);
        for (i, (xr, cr)) in x1_rows.iter().zip(&cond_rows).enumerate() {
            for (j, &v) in xr.iter().enumerate() {
                x1[[i, j]] = v;
            }
            for (j, &v) in cr.iter().enumerate() {
                cond[[i, j]] = v;
            }
            for j in 0..n {
                x0[[i, j]] = StandardNormal.sample(rng);
            }
            t.push(rng.gen_range(0.0..1.0));
        }
        FMBatch { x1, cond, x0, t }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Interpolated states x_t for the whole batch.
    pub fn x_t(&self) -> Array2<f64> {
        let mut out = self.x0.clone();
        for (i, &ti) in self.t.iter().enumerate() {
            for j in 0..out.ncols() {
                out[[i, j]] = (1.0 - ti) * self.x0[[i, j]] + ti * self.x1[[i, j]];
            }
        }
        out
    }

    /// Regression targets x1 - x0 for the whole batch.
    pub fn targets(&self) -> Array2<f64> {
        &self.x1 - &self.x0
    }
}

/// Flow-matching loss value: mean over the batch of the squared error norm
/// between the predicted and target velocity. Usable with any [`Velocity`].
pub fn fm_loss_value<M: Velocity>(model: &M, batch: &FMBatch) -> f64 {
    let pred = model.eval_batch(&batch.x_t(), &batch.t, &batch.cond);
    let target = batch.targets();
    let diff = &pred - &target;
    diff.iter().map(|&d| d * d).sum::<f64>() / batch.len() as f64
}

/// Flow-matching loss with the parameter gradient.
pub fn fm_loss(model: &VelocityField, batch: &FMBatch) -> Result<(f64, Vec<f64>)> {
    let cache = model.forward_cached(&batch.x_t(), &batch.t, &batch.cond);
    let target = batch.targets();
    let diff = &cache.out - &target;
    let loss = diff.iter().map(|&d| d * d).sum::<f64>() / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("flow-matching loss is {loss}")));
    }
    let d_out = diff.mapv(|d| 2.0 * d / batch.len() as f64);
    Ok((loss, model.backward(&cache, &d_out)))
}
