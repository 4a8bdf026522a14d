//! Preference objectives on flow-matching models.
//!
//! A preference batch carries matched winner/loser data states that share the
//! noise draw, timestep, and condition per element. The per-sample score
//!
//!   z = (||v_w - v(x_t_w)||^2 - ||v_w - v_ref(x_t_w)||^2)
//!     - (||v_l - v(x_t_l)||^2 - ||v_l - v_ref(x_t_l)||^2)
//!
//! contrasts the trainable model's velocity errors against a frozen
//! reference; the training loss is mean softplus(beta * z), which drives the
//! winner error down and the loser error up. A literal variant with the
//! opposite sign convention exists purely as a debugging comparison and is
//! never used by the trainers.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowcore::{Velocity, VelocityField};

/// Loss form selector. `Standard` is softplus(beta z); `LiteralPrinted` is
/// the sign-flipped -softplus(-beta z), kept for side-by-side inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    #[default]
    Standard,
    LiteralPrinted,
}

/// Preference-loss configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Preference strength / KL-regularization coefficient; must be > 0.
    pub beta: f64,
    #[serde(default)]
    pub form: LossForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 0.2,
            form: LossForm::Standard,
        }
    }
}

impl LossConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if beta <= 0.0 || !beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(LossConfig {
            beta,
            form: LossForm::Standard,
        })
    }
}

/// Matched winner/loser states with shared noise, timestep, and condition.
#[derive(Debug, Clone)]
pub struct PreferenceBatch {
    pub winner: Array2<f64>,
    pub loser: Array2<f64>,
    pub cond: Array2<f64>,
    pub x0: Array2<f64>,
    pub t: Vec<f64>,
}

impl PreferenceBatch {
    /// Build a batch from packed winner/loser states, drawing one shared
    /// x0 ~ N(0, I) and t ~ U[0, 1] per element.
    pub fn draw<R: Rng>(
        winners: Vec<Vec<f64>>,
        losers: Vec<Vec<f64>>,
        conds: Vec<Vec<f64>>,
        rng: &mut R,
    ) -> Self {
        let b = winners.len();
        assert!(b > 0 && losers.len() == b && conds.len() == b);
        let n = winners[0].len();
        let c = conds[0].len();
        let mut winner = Array2::zeros((b, n));
        let mut loser = Array2::zeros((b, n));
        let mut cond = Array2::zeros((b, c));
        let mut x0 = Array2::zeros((b, n));
        let mut t = Vec::with_capacity(b);
        for i in 0..b {
            assert_eq!(winners[i].len(), n);
            assert_eq!(losers[i].len(), n);
            for j in 0..n {
                winner[[i, j]] = winners[i][j];
                loser[[i, j]] = losers[i][j];
                x0[[i, j]] = StandardNormal.sample(rng);
            }
            for j in 0..c {
                cond[[i, j]] = conds[i][j];
            }
            t.push(rng.gen_range(0.0..1.0));
        }
        PreferenceBatch {
            winner,
            loser,
            cond,
            x0,
            t,
        }
    }

    /// Swap winners and losers (shared noise and timestep stay put).
    pub fn swapped(&self) -> Self {
        PreferenceBatch {
            winner: self.loser.clone(),
            loser: self.winner.clone(),
            cond: self.cond.clone(),
            x0: self.x0.clone(),
            t: self.t.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn x_t(&self, x1: &Array2<f64>) -> Array2<f64> {
        let mut out = x1.clone();
        for i in 0..out.nrows() {
            let t = self.t[i];
            for j in 0..out.ncols() {
                out[[i, j]] = (1.0 - t) * self.x0[[i, j]] + t * x1[[i, j]];
            }
        }
        out
    }

    pub fn x_t_winner(&self) -> Array2<f64> {
        self.x_t(&self.winner)
    }

    pub fn x_t_loser(&self) -> Array2<f64> {
        self.x_t(&self.loser)
    }

    pub fn v_winner(&self) -> Array2<f64> {
        &self.winner - &self.x0
    }

    pub fn v_loser(&self) -> Array2<f64> {
        &self.loser - &self.x0
    }
}

fn row_sq_norms(m: &Array2<f64>) -> Vec<f64> {
    m.rows().into_iter().map(|r| r.iter().map(|&v| v * v).sum()).collect()
}

/// Per-sample preference scores z. Works with any pair of velocity fields.
pub fn preference_score<M: Velocity, Rf: Velocity>(
    model: &M,
    reference: &Rf,
    batch: &PreferenceBatch,
) -> Result<Vec<f64>> {
    let xtw = batch.x_t_winner();
    let xtl = batch.x_t_loser();
    let vw = batch.v_winner();
    let vl = batch.v_loser();

    let e_model_w = row_sq_norms(&(&vw - &model.eval_batch(&xtw, &batch.t, &batch.cond)));
    let e_ref_w = row_sq_norms(&(&vw - &reference.eval_batch(&xtw, &batch.t, &batch.cond)));
    let e_model_l = row_sq_norms(&(&vl - &model.eval_batch(&xtl, &batch.t, &batch.cond)));
    let e_ref_l = row_sq_norms(&(&vl - &reference.eval_batch(&xtl, &batch.t, &batch.cond)));

    let mut z = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let zi = (e_model_w[i] - e_ref_w[i]) - (e_model_l[i] - e_ref_l[i]);
        if !zi.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite preference score at sample {i}"
            )));
        }
        z.push(zi);
    }
    Ok(z)
}

/// Overflow-safe softplus: max(x, 0) + log1p(exp(-|x|)).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn per_sample_loss(z: f64, cfg: &LossConfig) -> f64 {
    match cfg.form {
        LossForm::Standard => softplus(cfg.beta * z),
        LossForm::LiteralPrinted => -softplus(-cfg.beta * z),
    }
}

fn per_sample_dloss_dz(z: f64, cfg: &LossConfig) -> f64 {
    match cfg.form {
        LossForm::Standard => cfg.beta * sigmoid(cfg.beta * z),
        LossForm::LiteralPrinted => cfg.beta * sigmoid(-cfg.beta * z),
    }
}

/// Loss value without gradients; usable with velocity-field test doubles.
pub fn syncdpo_loss_value<M: Velocity, Rf: Velocity>(
    model: &M,
    reference: &Rf,
    batch: &PreferenceBatch,
    cfg: &LossConfig,
) -> Result<f64> {
    let z = preference_score(model, reference, batch)?;
    Ok(z.iter().map(|&zi| per_sample_loss(zi, cfg)).sum::<f64>() / batch.len() as f64)
}

/// Preference loss and its gradient in the trainable model's parameters. The
/// reference only contributes constants and receives no gradient.
pub fn syncdpo_loss(
    model: &VelocityField,
    reference: &VelocityField,
    batch: &PreferenceBatch,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    if cfg.beta <= 0.0 {
        return Err(Error::Config("beta must be positive".into()));
    }
    let b = batch.len();
    let xtw = batch.x_t_winner();
    let xtl = batch.x_t_loser();
    let vw = batch.v_winner();
    let vl = batch.v_loser();

    let cache_w = model.forward_cached(&xtw, &batch.t, &batch.cond);
    let cache_l = model.forward_cached(&xtl, &batch.t, &batch.cond);
    let err_w = &cache_w.out - &vw;
    let err_l = &cache_l.out - &vl;
    let e_model_w = row_sq_norms(&err_w);
    let e_model_l = row_sq_norms(&err_l);
    let e_ref_w = row_sq_norms(&(&reference.eval_batch(&xtw, &batch.t, &batch.cond) - &vw));
    let e_ref_l = row_sq_norms(&(&reference.eval_batch(&xtl, &batch.t, &batch.cond) - &vl));

    let mut loss = 0.0;
    let mut dz = Vec::with_capacity(b);
    for i in 0..b {
        let z = (e_model_w[i] - e_ref_w[i]) - (e_model_l[i] - e_ref_l[i]);
        loss += per_sample_loss(z, cfg);
        dz.push(per_sample_dloss_dz(z, cfg) / b as f64);
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("preference loss is {loss}")));
    }

    // dz/d(model out at winner) = 2 (out - v_w); loser enters with flipped sign.
    let mut d_out_w = err_w;
    let mut d_out_l = err_l;
    for i in 0..b {
        for j in 0..d_out_w.ncols() {
            d_out_w[[i, j]] *= 2.0 * dz[i];
            d_out_l[[i, j]] *= -2.0 * dz[i];
        }
    }
    let mut grad = model.backward(&cache_w, &d_out_w);
    let grad_l = model.backward(&cache_l, &d_out_l);
    for (g, gl) in grad.iter_mut().zip(&grad_l) {
        *g += gl;
    }
    Ok((loss, grad))
}

/// One draw of the gradient-norm diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct RatioSample {
    /// ||grad z|| / ||grad winner-MSE||; 0 denominators flag `degenerate`.
    pub ratio: f64,
    /// Model-error difference e_w - e_l. The reference terms of the full
    /// preference score are constants in theta, so they shift this value but
    /// never its gradient; the diagnostic runs from a single checkpoint and
    /// reports the reference-free part.
    pub z: f64,
    pub winner_mse: f64,
    pub degenerate: bool,
}

/// Gradient-norm ratio between the raw preference score z (no sigmoid, no
/// beta) and the winner's squared-error loss, for a single winner/loser pair
/// with a shared (x0, t) draw made here.
pub fn grad_norm_ratio<R: Rng>(
    model: &VelocityField,
    winner: &[f64],
    loser: &[f64],
    cond: &[f64],
    rng: &mut R,
) -> Result<RatioSample> {
    let batch = PreferenceBatch::draw(
        vec![winner.to_vec()],
        vec![loser.to_vec()],
        vec![cond.to_vec()],
        rng,
    );
    let xtw = batch.x_t_winner();
    let xtl = batch.x_t_loser();
    let vw = batch.v_winner();
    let vl = batch.v_loser();

    let cache_w = model.forward_cached(&xtw, &batch.t, &batch.cond);
    let cache_l = model.forward_cached(&xtl, &batch.t, &batch.cond);
    let err_w = &cache_w.out - &vw;
    let err_l = &cache_l.out - &vl;
    let winner_mse: f64 = err_w.iter().map(|&v| v * v).sum();
    let loser_mse: f64 = err_l.iter().map(|&v| v * v).sum();
    let z = winner_mse - loser_mse;
    if !z.is_finite() {
        return Err(Error::Numerical("non-finite preference score".into()));
    }

    // z gradient: the reference terms are constant in theta.
    let gz = {
        let mut g = model.backward(&cache_w, &err_w.mapv(|v| 2.0 * v));
        let gl = model.backward(&cache_l, &err_l.mapv(|v| -2.0 * v));
        for (a, b) in g.iter_mut().zip(&gl) {
            *a += b;
        }
        g
    };
    let gd = model.backward(&cache_w, &err_w.mapv(|v| 2.0 * v));

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = norm(&gd);
    if denom == 0.0 {
        return Ok(RatioSample {
            ratio: 0.0,
            z,
            winner_mse,
            degenerate: true,
        });
    }
    Ok(RatioSample {
        ratio: norm(&gz) / denom,
        z,
        winner_mse,
        degenerate: false,
    })
}
