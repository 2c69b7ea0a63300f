//! Permutation alignment ("re-basin") of MLP hidden units, weight-space
//! merging, and linear-mode-connectivity measurement.
//!
//! The crate is organised bottom-up:
//!
//! * [`lap`]: exact linear assignment used by every matcher;
//! * [`model`]: weights, forward pass, permutations and interpolation;
//! * [`data`], [`train`]: datasets, backprop and training loops;
//! * [`matching`]: weight matching, activation/correlation matching, the
//!   straight-through estimator, the greedy baseline and `merge_many`;
//! * [`eval`]: interpolation curves, loss barriers, sweeps and calibration;
//! * [`counterexample`]: two networks that no permutation connects linearly.

pub mod checkpoint;
pub mod counterexample;
pub mod data;
pub mod error;
pub mod eval;
pub mod lap;
pub mod matching;
pub mod model;
pub mod scalar;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use data::{Dataset, Split};
pub use error::{Error, Result};
pub use lap::{brute_force_lap, solve_lap, Assignment, ProfitMatrix};
pub use model::{
    apply_permutation, average, interpolate, loss_and_accuracy, Activation, Layer, LossAccuracy,
    ModelWeights, PermutationSet,
};
pub use scalar::Scalar;
