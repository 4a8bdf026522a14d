//! Cross-correlation synchronization oracle.
//!
//! Measures the signed temporal offset between a video and an audio track by
//! correlating onset envelopes on the audio grid. The video envelope is
//! channel 0 linearly upsampled; the audio envelope is channel 0 passed
//! through a matched filter (correlation with the exponential onset kernel),
//! which turns each one-sided decay into a symmetric response centered on its
//! onset. Without that step the asymmetric envelope drags the correlation
//! peak about 0.12 s late on perfectly synchronized pairs, swamping the
//! one-sample accuracy this oracle has to deliver.

use super::{Modality, ModalityTrack, World};

/// Result of one offset measurement. Positive offset = audio late.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncMeasurement {
    /// Signed offset in seconds, a multiple of the audio sample period.
    pub offset: f64,
    /// Peak normalized cross-correlation, in [-1, 1].
    pub score: f64,
    /// Set when either envelope has no variance; offset and score are 0.
    pub degenerate: bool,
}

impl World {
    /// Estimate the temporal offset of `audio` relative to `video`.
    ///
    /// Both tracks must be on this world's grids. Ties between equal
    /// correlation peaks resolve toward the smallest |lag|.
    pub fn measure_offset(&self, video: &ModalityTrack, audio: &ModalityTrack) -> SyncMeasurement {
        let cfg = self.config();
        assert_eq!(video.modality, Modality::Video);
        assert_eq!(audio.modality, Modality::Audio);
        assert_eq!(video.len, cfg.video_len(), "video track length mismatch");
        assert_eq!(audio.len, cfg.audio_len(), "audio track length mismatch");

        let n = cfg.audio_len();
        let upsample = (cfg.audio_rate / cfg.video_rate) as usize;

        // Video envelope: channel 0 on the audio grid via linear interpolation.
        let vch: Vec<f64> = (0..video.len).map(|f| video.at(f, 0) as f64).collect();
        let mut v_env = vec![0.0f64; n];
        for (i, v) in v_env.iter_mut().enumerate() {
            let coord = i as f64 / upsample as f64;
            let f0 = coord.floor() as usize;
            let f1 = (f0 + 1).min(video.len - 1);
            let w = coord - f0 as f64;
            *v = vch[f0] * (1.0 - w) + vch[f1] * w;
        }

        // Audio envelope: matched filter against the onset kernel. The
        // filtered response of a one-sided decay is symmetric around
        // ceil(onset); averaging adjacent samples re-centers it half a cell
        // earlier so onsets land on their true positions on average.
        let ach: Vec<f64> = (0..audio.len).map(|i| audio.at(i, 0) as f64).collect();
        let tau_samples = cfg.decay_tau * cfg.audio_rate;
        let kernel_len = (5.0 * tau_samples).ceil() as usize;
        let kernel: Vec<f64> = (0..=kernel_len)
            .map(|u| (-(u as f64) / tau_samples).exp())
            .collect();
        let mut filtered = vec![0.0f64; n];
        for (i, a) in filtered.iter_mut().enumerate() {
            let stop = (kernel_len + 1).min(n - i);
            *a = (0..stop).map(|u| ach[i + u] * kernel[u]).sum();
        }
        let mut a_env = vec![0.0f64; n];
        for i in 0..n {
            let next = if i + 1 < n { filtered[i + 1] } else { 0.0 };
            a_env[i] = 0.5 * (filtered[i] + next);
        }

        mean_center(&mut v_env);
        mean_center(&mut a_env);
        let v_norm = l2(&v_env);
        let a_norm = l2(&a_env);
        if v_norm < 1e-10 || a_norm < 1e-10 {
            return SyncMeasurement {
                offset: 0.0,
                score: 0.0,
                degenerate: true,
            };
        }

        // Scan lags by increasing |lag| so exact ties keep the smallest one.
        let max_lag = (n / 2) as i64;
        let mut best_lag = 0i64;
        let mut best = f64::NEG_INFINITY;
        for mag in 0..=max_lag {
            for lag in if mag == 0 { vec![0] } else { vec![-mag, mag] } {
                let c = cross_corr(&v_env, &a_env, lag) / (v_norm * a_norm);
                if c > best {
                    best = c;
                    best_lag = lag;
                }
            }
        }

        SyncMeasurement {
            offset: best_lag as f64 / cfg.audio_rate,
            score: best,
            degenerate: false,
        }
    }
}

/// Sum of v[i] * a[i + lag] over the valid overlap.
fn cross_corr(v: &[f64], a: &[f64], lag: i64) -> f64 {
    let n = v.len() as i64;
    let start = 0.max(-lag);
    let stop = n.min(n - lag);
    (start..stop)
        .map(|i| v[i as usize] * a[(i + lag) as usize])
        .sum()
}

fn mean_center(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    for v in x.iter_mut() {
        *v -= mean;
    }
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use crate::rng::stream;
    use crate::toyworld::World;

    #[test]
    fn synchronized_pairs_within_one_audio_sample() {
        let world = World::default();
        let mut rng = stream(5, "sync");
        for _ in 0..300 {
            let pair = world.make_pair(&mut rng);
            let m = world.measure_offset(&pair.video, &pair.audio);
            assert!(!m.degenerate);
            assert!(
                m.offset.abs() <= 1.0 / 32.0 + 1e-12,
                "sync offset {} too large",
                m.offset
            );
        }
    }

    #[test]
    fn recovers_injected_offsets() {
        // Four-event schedules cannot lose every onset for |delta| <= 2 s:
        // min spacing 0.6 s over 4 events does not fit inside the evicted
        // 1.5 s band, so at least one matched event always survives.
        let world = World::default();
        let mut rng = stream(6, "sweep");
        for &delta in &[0.25, -0.25, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0] {
            let mut ok = 0;
            let trials = 60;
            for _ in 0..trials {
                let s = world.sample_schedule(&mut rng, 3);
                let video = world.render_video(&s);
                let audio = world.render_audio(&s, delta);
                let m = world.measure_offset(&video, &audio);
                if !m.degenerate && (m.offset - delta).abs() <= 0.125 {
                    ok += 1;
                }
            }
            assert!(ok * 100 >= trials * 95, "delta {delta}: {ok}/{trials}");
        }
    }

    #[test]
    fn tight_recovery_at_one_second() {
        let world = World::default();
        let mut rng = stream(8, "one-second");
        for _ in 0..50 {
            let s = world.sample_schedule(&mut rng, 3);
            let video = world.render_video(&s);
            let audio = world.render_audio(&s, 1.0);
            let m = world.measure_offset(&video, &audio);
            assert!((m.offset - 1.0).abs() <= 1.0 / 16.0, "offset {}", m.offset);
        }
    }

    #[test]
    fn mismatched_pairs_score_below_matched() {
        let world = World::default();
        let mut rng = stream(9, "mismatch");
        let mut matched = 0.0;
        let mut mismatched = 0.0;
        let n = 500;
        for _ in 0..n {
            let a = world.make_pair(&mut rng);
            let b = world.make_pair(&mut rng);
            matched += world.measure_offset(&a.video, &a.audio).score;
            mismatched += world.measure_offset(&a.video, &b.audio).score;
        }
        assert!(
            mismatched / (n as f64) < matched / (n as f64),
            "mismatched {} !< matched {}",
            mismatched / (n as f64),
            matched / (n as f64)
        );
    }

    #[test]
    fn oracle_symmetry_under_modality_swap() {
        // Translating the audio by delta reads as +delta; translating the
        // video by the same delta reads as -delta, within one audio sample.
        use crate::toyworld::ModalityTrack;
        fn shift_cells(track: &ModalityTrack, cells: usize) -> ModalityTrack {
            let mut out = ModalityTrack::zeros(track.len, track.channels, track.rate, track.modality);
            for j in cells..track.len {
                for c in 0..track.channels {
                    *out.at_mut(j, c) = track.at(j - cells, c);
                }
            }
            out
        }

        let world = World::default();
        let mut rng = stream(10, "symmetry");
        for _ in 0..30 {
            let s = world.sample_schedule(&mut rng, 2);
            let pair = world.pair_from_schedule(&s);
            // delta = 0.75 s: exact on both grids, 6 frames and 24 samples
            let audio_late =
                world.measure_offset(&pair.video, &shift_cells(&pair.audio, 24));
            let video_late =
                world.measure_offset(&shift_cells(&pair.video, 6), &pair.audio);
            assert!(
                (audio_late.offset + video_late.offset).abs() <= 1.0 / 32.0 + 1e-12,
                "audio late {} video late {}",
                audio_late.offset,
                video_late.offset
            );
        }
    }

    #[test]
    fn degenerate_envelope_flagged() {
        let world = World::default();
        let pair = world.make_pair(&mut stream(12, "degenerate"));
        let mut silent = pair.audio.clone();
        for t in 0..silent.len {
            *silent.at_mut(t, 0) = 0.0;
        }
        let m = world.measure_offset(&pair.video, &silent);
        assert!(m.degenerate);
        assert_eq!(m.offset, 0.0);
        assert_eq!(m.score, 0.0);
    }
}
