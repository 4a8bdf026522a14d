//! Flow-matching preference optimization on a synthetic two-modality task.
//!
//! The crate is organized around six pieces:
//!
//! - [`toyworld`]: synthetic synchronized video/audio pairs with known event
//!   times and an exact cross-correlation synchronization oracle.
//! - [`flowcore`]: the linear-interpolant flow-matching objective, a small
//!   MLP velocity field with hand-rolled backprop, and an Euler ODE sampler.
//! - [`prefloss`]: the flow preference objective (winner/loser velocity-error
//!   differences against a frozen reference) and a gradient-norm diagnostic.
//! - [`negatives`]: rule-based temporal perturbations (scale, replace, shift,
//!   mask, synthesize) and a sampling-and-ranking preference-pair baseline.
//! - [`curriculum`]: the linear replace-to-scale difficulty schedule.
//! - [`harness`]: trainers, evaluation, run manifests, and comparison tools.

pub mod arrayio;
pub mod curriculum;
pub mod error;
pub mod flowcore;
pub mod gradcheck;
pub mod harness;
pub mod negatives;
pub mod prefloss;
pub mod rng;
pub mod toyworld;

pub use error::{Error, Result};
pub use toyworld::{World, WorldConfig};
