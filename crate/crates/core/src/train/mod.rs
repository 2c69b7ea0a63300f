//! Training from scratch: initialization, minibatch order, optimizers and
//! activation recording.

mod backprop;
mod config;
mod optim;

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Activation, Layer, ModelWeights};
use crate::scalar::Scalar;

pub use backprop::loss_and_gradients;
pub use config::{OptimizerKind, TrainConfig};
pub use optim::Optimizer;

/// Default cap on rows used when recording activations for matching.
pub const DEFAULT_ACTIVATION_ROWS: usize = 10_000;

/// He-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`) and zero biases.
pub fn init_mlp<T: Scalar>(dims: &[usize], rng: &mut impl Rng) -> Result<ModelWeights<T>> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::invalid(format!("invalid layer widths {dims:?}")));
    }
    let layers = dims
        .windows(2)
        .map(|w| {
            let bound = (6.0 / w[0] as f64).sqrt();
            Layer {
                weight: Array2::from_shape_fn((w[1], w[0]), |_| {
                    T::from_f64(rng.random_range(-bound..bound))
                }),
                bias: Array1::zeros(w[1]),
            }
        })
        .collect();
    ModelWeights::new(layers, Activation::Relu)
}

/// Seeded minibatch order: each epoch is a fresh shuffle of `0..n` cut into
/// batches of `batch_size` (the last one may be short).
#[derive(Debug, Clone)]
pub struct BatchSampler {
    n: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        assert!(n > 0 && batch_size > 0, "sampler needs rows and a batch size");
        BatchSampler {
            n,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: Vec::new(),
            cursor: n,
        }
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    /// Row indices of the next batch, reshuffling at epoch boundaries.
    pub fn next_batch(&mut self) -> &[usize] {
        if self.cursor >= self.n {
            self.order = (0..self.n).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor = (start + self.batch_size).min(self.n);
        &self.order[start..self.cursor]
    }
}

/// Rows `indices` of `data` as a contiguous batch.
pub fn gather_batch<T: Scalar>(data: &Dataset<T>, indices: &[usize]) -> (Array2<T>, Vec<usize>) {
    let x = data.features().select(Axis(0), indices);
    let y = indices.iter().map(|&i| data.labels()[i]).collect();
    (x, y)
}

/// Trains an MLP with hidden widths `config.widths` on `data`.
pub fn train_mlp<T: Scalar>(config: &TrainConfig, data: &Dataset<T>) -> Result<ModelWeights<T>> {
    train_mlp_with(config, data, |_, _| {})
}

/// Like [`train_mlp`], calling `on_epoch(e, weights)` with the initial
/// weights (`e = 0`) and after every completed epoch `e = 1..=epochs`.
pub fn train_mlp_with<T: Scalar>(
    config: &TrainConfig,
    data: &Dataset<T>,
    mut on_epoch: impl FnMut(usize, &ModelWeights<T>),
) -> Result<ModelWeights<T>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims: Vec<usize> = std::iter::once(data.dim())
        .chain(config.widths.iter().copied())
        .chain(std::iter::once(data.num_classes()))
        .collect();
    let mut weights = init_mlp::<T>(&dims, &mut rng)?;
    let mut sampler = BatchSampler::new(data.len(), config.batch_size, rng.random());
    let mut optimizer = Optimizer::from_config(config);

    on_epoch(0, &weights);
    let mut step = 0;
    for epoch in 1..=config.epochs {
        for _ in 0..sampler.batches_per_epoch() {
            let (x, y) = gather_batch(data, sampler.next_batch());
            let (loss, grads) = loss_and_gradients(&weights, x.view(), &y)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step });
            }
            optimizer.step(&mut weights, &grads);
            step += 1;
        }
        if weights.flat_params().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        on_epoch(epoch, &weights);
    }
    Ok(weights)
}

/// Post-activation values of every hidden layer over a fixed row order.
/// `layers[l]` is `d_l x n`; column `i` belongs to dataset row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord<T = f32> {
    pub layers: Vec<Array2<T>>,
}

impl<T: Scalar> ActivationRecord<T> {
    pub fn num_rows(&self) -> usize {
        self.layers.first().map_or(0, Array2::ncols)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Array2::nrows).collect()
    }
}

/// Hidden activations of `weights` on the first `max_rows` rows of `data`.
pub fn record_activations<T: Scalar>(
    weights: &ModelWeights<T>,
    data: &Dataset<T>,
    max_rows: usize,
) -> Result<ActivationRecord<T>> {
    let n = data.len().min(max_rows);
    let mut outputs = weights.forward_recording(data.features().slice(s![..n, ..]))?;
    outputs.pop();
    Ok(ActivationRecord {
        layers: outputs.into_iter().map(|h| h.reversed_axes()).collect(),
    })
}
