//! Difficulty schedule over negative kinds: sampling probability moves
//! linearly from Replace (easy, semantic + temporal mismatch) to Scale
//! (hard, temporal-only mismatch) as training progresses. Other perturbation
//! kinds never participate in the schedule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::negatives::PerturbationKind;

/// Schedule configuration. `k` is the per-step probability decrement as a
/// fraction (the conventional presentation is in percent: k_percent = 100 k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub k: f64,
    pub total_steps: u64,
}

impl CurriculumConfig {
    pub fn new(k: f64, total_steps: u64) -> Self {
        assert!(k >= 0.0, "curriculum rate must be nonnegative");
        CurriculumConfig { k, total_steps }
    }

    /// Rate such that p_replace reaches 0 exactly at the end of the budget,
    /// the same geometry as a 0.01%-per-step schedule over 5,000 steps.
    pub fn scaled_to_budget(total_steps: u64) -> Self {
        let k = 0.5 / total_steps.max(1) as f64;
        CurriculumConfig { k, total_steps }
    }

    pub fn k_percent(&self) -> f64 {
        self.k * 100.0
    }
}

/// Schedule position: step plus the probabilities in force there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub step: u64,
    pub p_replace: f64,
    pub p_scale: f64,
}

/// p_replace(t) = clamp(0.5 - k t, 0, 0.5), p_scale = 1 - p_replace.
pub fn sampling_probs(step: u64, cfg: &CurriculumConfig) -> (f64, f64) {
    let p_replace = (0.5 - cfg.k * step as f64).clamp(0.0, 0.5);
    (p_replace, 1.0 - p_replace)
}

pub fn state_at(step: u64, cfg: &CurriculumConfig) -> CurriculumState {
    let (p_replace, p_scale) = sampling_probs(step, cfg);
    CurriculumState {
        step,
        p_replace,
        p_scale,
    }
}

/// Draw Replace or Scale according to the schedule at `step`.
pub fn sample_kind<R: Rng>(step: u64, cfg: &CurriculumConfig, rng: &mut R) -> PerturbationKind {
    let (p_replace, _) = sampling_probs(step, cfg);
    if rng.gen_range(0.0..1.0) < p_replace {
        PerturbationKind::Replace
    } else {
        PerturbationKind::Scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn schedule_reference_points() {
        let cfg = CurriculumConfig::new(1e-4, 10_000);
        assert_eq!(sampling_probs(0, &cfg), (0.5, 0.5));
        assert_eq!(sampling_probs(2500, &cfg), (0.25, 0.75));
        assert_eq!(sampling_probs(5000, &cfg), (0.0, 1.0));
        assert_eq!(sampling_probs(8000, &cfg), (0.0, 1.0));
    }

    #[test]
    fn simplex_and_monotonicity() {
        let cfg = CurriculumConfig::new(3.7e-5, 20_000);
        let mut prev = f64::INFINITY;
        for step in (0..20_000).step_by(250) {
            let (pr, ps) = sampling_probs(step, &cfg);
            assert!((pr + ps - 1.0).abs() < 1e-15);
            assert!((0.0..=0.5).contains(&pr));
            assert!(pr <= prev);
            prev = pr;
        }
    }

    #[test]
    fn zero_rate_is_uniform() {
        let cfg = CurriculumConfig::new(0.0, 1000);
        let mut rng = stream(1, "uniform");
        let n = 10_000;
        let replaces = (0..n)
            .filter(|_| sample_kind(123, &cfg, &mut rng) == PerturbationKind::Replace)
            .count();
        // Binomial(10k, 0.5): 3 sigma is 150.
        let dev = (replaces as f64 - n as f64 * 0.5).abs();
        assert!(dev <= 150.0, "replace count {replaces}");
    }

    #[test]
    fn frequencies_track_schedule_midpoint() {
        let cfg = CurriculumConfig::new(1e-4, 10_000);
        let mut rng = stream(2, "mid");
        let n = 10_000;
        let replaces = (0..n)
            .filter(|_| sample_kind(2500, &cfg, &mut rng) == PerturbationKind::Replace)
            .count();
        // Binomial(10k, 0.25): 3 sigma is 130.
        let dev = (replaces as f64 - n as f64 * 0.25).abs();
        assert!(dev <= 130.0, "replace count {replaces}");
    }

    #[test]
    fn past_clamp_always_scale() {
        let cfg = CurriculumConfig::new(1e-4, 10_000);
        let mut rng = stream(3, "late");
        for _ in 0..1000 {
            assert_eq!(sample_kind(5000, &cfg, &mut rng), PerturbationKind::Scale);
        }
    }

    #[test]
    fn budget_scaled_rate_hits_zero_at_final_step() {
        let cfg = CurriculumConfig::scaled_to_budget(3000);
        let (pr, _) = sampling_probs(3000, &cfg);
        assert!(pr.abs() < 1e-12);
        let (pr, _) = sampling_probs(2999, &cfg);
        assert!(pr > 0.0);
    }
}
