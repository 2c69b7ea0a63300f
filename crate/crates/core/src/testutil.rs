use ndarray::{Array1, Array2};
use rand::Rng;

use crate::model::{Activation, Layer, ModelWeights, PermutationSet};
use crate::scalar::Scalar;

/// Weights and biases uniform on `[-1, 1]`.
pub(crate) fn random_model<T: Scalar>(rng: &mut impl Rng, dims: &[usize]) -> ModelWeights<T> {
    let layers = dims
        .windows(2)
        .map(|w| Layer {
            weight: Array2::from_shape_fn((w[1], w[0]), |_| T::from_f64(rng.random_range(-1.0..1.0))),
            bias: Array1::from_shape_fn(w[1], |_| T::from_f64(rng.random_range(-1.0..1.0))),
        })
        .collect();
    ModelWeights::new(layers, Activation::Relu).unwrap()
}

pub(crate) fn random_perms(rng: &mut impl Rng, widths: &[usize]) -> PermutationSet {
    PermutationSet::random(widths, rng)
}
