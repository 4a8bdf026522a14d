//! Synthetic synchronized two-modality data with known event times.
//!
//! A "world" draws event schedules per class, renders them into a video-like
//! track (Gaussian bumps on channel 0 at 8 samples/s) and an audio-like track
//! (decaying exponential onsets on channel 0 at 32 samples/s), and measures
//! the temporal offset between the two with a cross-correlation oracle. Event
//! times are ground truth, so every synchronization claim is checkable.

mod dataset;
mod oracle;

pub use dataset::{Dataset, DatasetManifest, DATASET_FORMAT_VERSION};
pub use oracle::SyncMeasurement;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a;

/// Fixed grid and rendering parameters of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Clip duration in seconds.
    pub duration: f64,
    /// Video samples per second.
    pub video_rate: f64,
    /// Video channels (channel 0 = event bumps, the rest texture).
    pub video_channels: usize,
    /// Audio samples per second.
    pub audio_rate: f64,
    /// Audio channels (channel 0 = event onsets, channel 1 texture).
    pub audio_channels: usize,
    /// Number of event classes; class c schedules c+1 events.
    pub classes: usize,
    /// Events are drawn in [margin, duration - margin].
    pub event_margin: f64,
    /// Minimum spacing between events within a schedule.
    pub min_gap: f64,
    /// Std of the video event bump, seconds.
    pub bump_sigma: f64,
    /// Decay constant of the audio onset envelope, seconds.
    pub decay_tau: f64,
    /// Std of the additive texture noise.
    pub texture_noise: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            duration: 5.0,
            video_rate: 8.0,
            video_channels: 4,
            audio_rate: 32.0,
            audio_channels: 2,
            classes: 4,
            event_margin: 0.5,
            min_gap: 0.6,
            bump_sigma: 0.15,
            decay_tau: 0.2,
            texture_noise: 0.02,
        }
    }
}

impl WorldConfig {
    pub fn video_len(&self) -> usize {
        (self.video_rate * self.duration).round() as usize
    }

    pub fn audio_len(&self) -> usize {
        (self.audio_rate * self.duration).round() as usize
    }
}

/// Which of the two tracks a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Video,
    Audio,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Video => "video",
            Modality::Audio => "audio",
        }
    }
}

/// The ground-truth event times behind one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSchedule {
    pub class_id: usize,
    /// Strictly increasing, all within [margin, duration - margin].
    pub event_times: Vec<f64>,
    pub duration: f64,
}

/// A (T, d) grid of samples for one modality, stored row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTrack {
    pub samples: Vec<f32>,
    pub len: usize,
    pub channels: usize,
    pub rate: f64,
    pub modality: Modality,
}

impl ModalityTrack {
    pub fn zeros(len: usize, channels: usize, rate: f64, modality: Modality) -> Self {
        ModalityTrack {
            samples: vec![0.0; len * channels],
            len,
            channels,
            rate,
            modality,
        }
    }

    #[inline]
    pub fn at(&self, t: usize, c: usize) -> f32 {
        self.samples[t * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, t: usize, c: usize) -> &mut f32 {
        &mut self.samples[t * self.channels + c]
    }

    /// Copy of one channel over time.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        (0..self.len).map(|t| self.at(t, c)).collect()
    }
}

/// One synchronized sample: both tracks rendered from the same schedule,
/// plus the one-hot condition vector. The schedule is metadata for oracles
/// and tests; the model never sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub video: ModalityTrack,
    pub audio: ModalityTrack,
    pub condition: Vec<f32>,
    pub schedule: EventSchedule,
}

/// The synthetic world: schedule sampling, rendering, and the sync oracle.
#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
}

const SCHEDULE_RETRY_CAP: usize = 10_000;

impl Default for World {
    fn default() -> Self {
        World::new(WorldConfig::default())
    }
}

impl World {
    pub fn new(cfg: WorldConfig) -> Self {
        World { cfg }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    /// Draw an event schedule for `class_id` (class c has c+1 events, pairwise
    /// gaps >= min_gap) by rejection sampling.
    pub fn sample_schedule<R: Rng>(&self, rng: &mut R, class_id: usize) -> EventSchedule {
        assert!(class_id < self.cfg.classes, "class_id out of range");
        let n_events = class_id + 1;
        let lo = self.cfg.event_margin;
        let hi = self.cfg.duration - self.cfg.event_margin;
        for _ in 0..SCHEDULE_RETRY_CAP {
            let mut times: Vec<f64> = (0..n_events).map(|_| rng.gen_range(lo..hi)).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let spaced = times.windows(2).all(|w| w[1] - w[0] >= self.cfg.min_gap);
            if spaced {
                return EventSchedule {
                    class_id,
                    event_times: times,
                    duration: self.cfg.duration,
                };
            }
        }
        unreachable!("schedule rejection sampling exceeded retry cap");
    }

    /// Render the video track: channel 0 carries a Gaussian bump per event,
    /// channels 1.. carry a class-dependent low-frequency texture plus small
    /// noise. Deterministic given the schedule.
    pub fn render_video(&self, schedule: &EventSchedule) -> ModalityTrack {
        let cfg = &self.cfg;
        let len = cfg.video_len();
        let mut track = ModalityTrack::zeros(len, cfg.video_channels, cfg.video_rate, Modality::Video);
        for f in 0..len {
            let t = f as f64 / cfg.video_rate;
            let mut bump = 0.0;
            for &e in &schedule.event_times {
                let d = t - e;
                bump += (-d * d / (2.0 * cfg.bump_sigma * cfg.bump_sigma)).exp();
            }
            *track.at_mut(f, 0) = bump as f32;
        }
        self.fill_texture(&mut track, schedule);
        track
    }

    /// Render the audio track: channel 0 carries, per event, a decaying
    /// exponential envelope starting at event_time + extra_offset (clipped at
    /// the track boundaries); channel 1 carries texture + noise.
    pub fn render_audio(&self, schedule: &EventSchedule, extra_offset: f64) -> ModalityTrack {
        let cfg = &self.cfg;
        let len = cfg.audio_len();
        let mut track = ModalityTrack::zeros(len, cfg.audio_channels, cfg.audio_rate, Modality::Audio);
        for i in 0..len {
            let t = i as f64 / cfg.audio_rate;
            let mut env = 0.0;
            for &e in &schedule.event_times {
                let onset = e + extra_offset;
                if t >= onset {
                    env += (-(t - onset) / cfg.decay_tau).exp();
                }
            }
            *track.at_mut(i, 0) = env as f32;
        }
        self.fill_texture(&mut track, schedule);
        track
    }

    /// Texture channels: a fixed class-dependent sinusoid plus small noise
    /// seeded from the schedule, so rendering stays a pure function of it.
    fn fill_texture(&self, track: &mut ModalityTrack, schedule: &EventSchedule) {
        use rand_chacha::rand_core::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut noise = rand_chacha::ChaCha8Rng::seed_from_u64(
            schedule_seed(schedule) ^ fnv1a(track.modality.name().as_bytes()),
        );
        let class = schedule.class_id as f64;
        for c in 1..track.channels {
            let freq = 0.3 + 0.2 * c as f64 + 0.05 * class;
            let phase = class * std::f64::consts::FRAC_PI_2 + 0.7 * c as f64;
            for t in 0..track.len {
                let time = t as f64 / track.rate;
                let texture = 0.8 * (2.0 * std::f64::consts::PI * freq * time + phase).sin();
                let n: f64 = StandardNormal.sample(&mut noise);
                *track.at_mut(t, c) = (texture + self.cfg.texture_noise * n) as f32;
            }
        }
    }

    /// Draw a class uniformly and render a synchronized pair from one schedule.
    pub fn make_pair<R: Rng>(&self, rng: &mut R) -> PairSample {
        let class_id = rng.gen_range(0..self.cfg.classes);
        let schedule = self.sample_schedule(rng, class_id);
        self.pair_from_schedule(&schedule)
    }

    /// Render both modalities of an existing schedule with zero extra offset.
    pub fn pair_from_schedule(&self, schedule: &EventSchedule) -> PairSample {
        let video = self.render_video(schedule);
        let audio = self.render_audio(schedule, 0.0);
        let mut condition = vec![0.0f32; self.cfg.classes];
        condition[schedule.class_id] = 1.0;
        PairSample {
            video,
            audio,
            condition,
            schedule: schedule.clone(),
        }
    }

    /// Serialize `n` freshly drawn pairs to `path` (see `Dataset`).
    pub fn make_dataset<R: Rng>(
        &self,
        rng: &mut R,
        n: usize,
        seed_label: u64,
        path: &std::path::Path,
    ) -> Result<DatasetManifest> {
        if n == 0 {
            return Err(Error::Config("dataset size must be >= 1".into()));
        }
        let pairs: Vec<PairSample> = (0..n).map(|_| self.make_pair(rng)).collect();
        let dataset = Dataset::new(self.cfg.clone(), seed_label, pairs);
        dataset.save(path)?;
        Ok(dataset.manifest().clone())
    }
}

/// Stable hash of a schedule, used to seed its rendering noise.
fn schedule_seed(schedule: &EventSchedule) -> u64 {
    let mut bytes = Vec::with_capacity(8 + 8 * schedule.event_times.len());
    bytes.extend_from_slice(&(schedule.class_id as u64).to_le_bytes());
    for &t in &schedule.event_times {
        bytes.extend_from_slice(&t.to_le_bytes());
    }
    fnv1a(&bytes)
}
