//! The velocity network: a two-hidden-layer tanh MLP over
//! state || sinusoidal time embedding || condition, with explicit backprop.
//!
//! Parameters live in one flat f64 vector with a fixed layout
//! [w1, b1, w2, b2, w3, b3] (weights row-major, rows = outputs), so the
//! optimizer, EMA, checkpointing, and finite-difference checks all see the
//! same ordering.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Architecture descriptor. `time_embed_dim` must be even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub cond_dim: usize,
    pub hidden_dim: usize,
    pub time_embed_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            state_dim: 480,
            cond_dim: 4,
            hidden_dim: 256,
            time_embed_dim: 16,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.state_dim + self.time_embed_dim + self.cond_dim
    }

    pub fn param_count(&self) -> usize {
        let (i, h, o) = (self.input_dim(), self.hidden_dim, self.state_dim);
        h * i + h + h * h + h + o * h + o
    }
}

/// Anything that evaluates a conditional velocity field. Implemented by the
/// trainable network and by simple test doubles.
pub trait Velocity {
    fn state_dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    /// Evaluate v(x_t, t, y) for a batch: `x` is (B, N), `t` has length B,
    /// `y` is (B, C); returns (B, N).
    fn eval_batch(&self, x: &Array2<f64>, t: &[f64], y: &Array2<f64>) -> Array2<f64>;

    fn eval_one(&self, x: &[f64], t: f64, y: &[f64]) -> Vec<f64> {
        let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        let yb = Array2::from_shape_vec((1, y.len()), y.to_vec()).unwrap();
        self.eval_batch(&xb, &[t], &yb).row(0).to_vec()
    }
}

/// The parametric velocity field v_theta.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    cfg: ModelConfig,
    theta: Vec<f64>,
    frozen: bool,
}

/// Cached activations from a forward pass, consumed by `backward`.
pub struct ForwardCache {
    input: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    pub out: Array2<f64>,
}

impl VelocityField {
    /// Initialize with zero biases and N(0, 1/fan_in) weights.
    pub fn init<R: Rng>(cfg: ModelConfig, rng: &mut R) -> Self {
        assert!(cfg.time_embed_dim % 2 == 0, "time embedding dim must be even");
        let mut theta = vec![0.0; cfg.param_count()];
        let (i, h, o) = (cfg.input_dim(), cfg.hidden_dim, cfg.state_dim);
        let spans = [(0, h * i, i), (h * i + h, h * h, h), (h * i + h + h * h + h, o * h, h)];
        for &(start, count, fan_in) in &spans {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for v in &mut theta[start..start + count] {
                let z: f64 = StandardNormal.sample(rng);
                *v = z * scale;
            }
        }
        VelocityField {
            cfg,
            theta,
            frozen: false,
        }
    }

    /// All-zero parameters; the network output is identically zero.
    pub fn zeros(cfg: ModelConfig) -> Self {
        assert!(cfg.time_embed_dim % 2 == 0, "time embedding dim must be even");
        VelocityField {
            theta: vec![0.0; cfg.param_count()],
            cfg,
            frozen: false,
        }
    }

    pub fn from_params(cfg: ModelConfig, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), cfg.param_count());
        VelocityField {
            cfg,
            theta,
            frozen: false,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        assert!(!self.frozen, "frozen model must not be mutated");
        &mut self.theta
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        assert!(!self.frozen, "frozen model must not be mutated");
        assert_eq!(theta.len(), self.theta.len());
        self.theta.copy_from_slice(theta);
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    /// Mark as a frozen reference; any later parameter mutation panics.
    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    fn slices(&self) -> ParamSlices<'_> {
        let (i, h, o) = (self.cfg.input_dim(), self.cfg.hidden_dim, self.cfg.state_dim);
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &self.theta[pos..pos + n];
            pos += n;
            s
        };
        ParamSlices {
            w1: ArrayView2::from_shape((h, i), take(h * i)).unwrap(),
            b1: take(h),
            w2: ArrayView2::from_shape((h, h), take(h * h)).unwrap(),
            b2: take(h),
            w3: ArrayView2::from_shape((o, h), take(o * h)).unwrap(),
            b3: take(o),
        }
    }

    /// Assemble the network input [x || time_embedding(t) || y].
    fn assemble_input(&self, x: &Array2<f64>, t: &[f64], y: &Array2<f64>) -> Array2<f64> {
        let b = x.nrows();
        assert_eq!(t.len(), b);
        assert_eq!(y.nrows(), b);
        assert_eq!(x.ncols(), self.cfg.state_dim);
        assert_eq!(y.ncols(), self.cfg.cond_dim);
        let mut input = Array2::zeros((b, self.cfg.input_dim()));
        for r in 0..b {
            for c in 0..self.cfg.state_dim {
                input[[r, c]] = x[[r, c]];
            }
            let emb = time_embedding(t[r], self.cfg.time_embed_dim);
            for (k, &e) in emb.iter().enumerate() {
                input[[r, self.cfg.state_dim + k]] = e;
            }
            for c in 0..self.cfg.cond_dim {
                input[[r, self.cfg.state_dim + self.cfg.time_embed_dim + c]] = y[[r, c]];
            }
        }
        input
    }

    /// Forward pass keeping activations for backprop.
    pub fn forward_cached(&self, x: &Array2<f64>, t: &[f64], y: &Array2<f64>) -> ForwardCache {
        let p = self.slices();
        let input = self.assemble_input(x, t, y);
        let mut a1 = input.dot(&p.w1.t());
        add_bias(&mut a1, p.b1);
        let h1 = a1.mapv(f64::tanh);
        let mut a2 = h1.dot(&p.w2.t());
        add_bias(&mut a2, p.b2);
        let h2 = a2.mapv(f64::tanh);
        let mut out = h2.dot(&p.w3.t());
        add_bias(&mut out, p.b3);
        ForwardCache { input, h1, h2, out }
    }

    /// Backpropagate `d_out` = dL/d(output) through the cached pass,
    /// returning the flat parameter gradient (same layout as `params`).
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Vec<f64> {
        let p = self.slices();
        let (i, h, o) = (self.cfg.input_dim(), self.cfg.hidden_dim, self.cfg.state_dim);

        let d_w3 = d_out.t().dot(&cache.h2);
        let d_b3 = column_sums(d_out);
        let d_h2 = d_out.dot(&p.w3);
        let d_a2 = &d_h2 * &cache.h2.mapv(|v| 1.0 - v * v);
        let d_w2 = d_a2.t().dot(&cache.h1);
        let d_b2 = column_sums(&d_a2);
        let d_h1 = d_a2.dot(&p.w2);
        let d_a1 = &d_h1 * &cache.h1.mapv(|v| 1.0 - v * v);
        let d_w1 = d_a1.t().dot(&cache.input);
        let d_b1 = column_sums(&d_a1);

        let mut grad = Vec::with_capacity(self.theta.len());
        grad.extend(d_w1.iter());
        grad.extend(d_b1.iter());
        grad.extend(d_w2.iter());
        grad.extend(d_b2.iter());
        grad.extend(d_w3.iter());
        grad.extend(d_b3.iter());
        debug_assert_eq!(grad.len(), h * i + h + h * h + h + o * h + o);
        grad
    }
}

impl Velocity for VelocityField {
    fn state_dim(&self) -> usize {
        self.cfg.state_dim
    }

    fn cond_dim(&self) -> usize {
        self.cfg.cond_dim
    }

    fn eval_batch(&self, x: &Array2<f64>, t: &[f64], y: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x, t, y).out
    }
}

struct ParamSlices<'a> {
    w1: ArrayView2<'a, f64>,
    b1: &'a [f64],
    w2: ArrayView2<'a, f64>,
    b2: &'a [f64],
    w3: ArrayView2<'a, f64>,
    b3: &'a [f64],
}

fn add_bias(m: &mut Array2<f64>, b: &[f64]) {
    for mut row in m.rows_mut() {
        for (v, &bias) in row.iter_mut().zip(b) {
            *v += bias;
        }
    }
}

fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(ndarray::Axis(0))
}

/// Sinusoidal embedding of t in [0, 1]: interleaved sin/cos at dyadic
/// frequencies pi * 2^k.
pub fn time_embedding(t: f64, dim: usize) -> Vec<f64> {
    let mut emb = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let omega = std::f64::consts::PI * (1u64 << k) as f64;
        emb.push((omega * t).sin());
        emb.push((omega * t).cos());
    }
    emb
}
