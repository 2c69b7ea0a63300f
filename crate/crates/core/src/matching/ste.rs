use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{apply_permutation, interpolate, loss_and_accuracy, ModelWeights, PermutationSet};
use crate::scalar::Scalar;
use crate::train::{gather_batch, loss_and_gradients, BatchSampler, Optimizer, OptimizerKind};

use super::weight::weight_matching;

/// What the forward pass uses in place of `π(Θ_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projection {
    /// `π(Θ_B)` with `π = weight_matching(Θ̃_B, Θ_B)` (straight-through).
    #[default]
    WeightMatching,
    /// `Θ̃_B` itself with `π` fixed to the identity; plain midpoint training.
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub seed: u64,
    pub projection: Projection,
    /// Rows of the training set used to score each candidate `π`; all rows
    /// when `None`.
    pub eval_rows: Option<usize>,
}

impl Default for SteConfig {
    fn default() -> Self {
        SteConfig {
            learning_rate: 1e-2,
            steps: 1000,
            batch_size: 128,
            optimizer: OptimizerKind::SgdMomentum,
            momentum: 0.9,
            seed: 0,
            projection: Projection::WeightMatching,
            eval_rows: None,
        }
    }
}

impl SteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.eval_rows == Some(0) {
            return Err(Error::invalid("eval_rows must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteMatching {
    /// The candidate with the lowest midpoint training loss.
    pub perms: PermutationSet,
    pub best_step: usize,
    pub best_loss: f64,
    /// Minibatch midpoint loss at each optimizer step.
    pub batch_losses: Vec<f64>,
    /// Number of distinct consecutive candidates scored.
    pub candidates: usize,
}

/// Straight-through estimator matching. `Θ̃_B` starts at `Θ_A`; each step
/// projects it onto the orbit of `Θ_B` with weight matching, takes the
/// gradient of the minibatch loss at `½(Θ_A + π(Θ_B))` and applies it to
/// `Θ̃_B`. The projection at step `t` uses seed `cfg.seed + t`, so with zero
/// steps the result is `weight_matching(Θ_A, Θ_B, cfg.seed)`.
pub fn ste_matching<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
    data: &Dataset<T>,
    cfg: &SteConfig,
) -> Result<SteMatching> {
    ste_matching_with(a, b, data, cfg, |_, _| {})
}

/// [`ste_matching`] calling `on_step(step, batch_loss)` after each update.
pub fn ste_matching_with<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
    data: &Dataset<T>,
    cfg: &SteConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<SteMatching> {
    cfg.validate()?;
    a.check_same_shape(b)?;
    if data.is_empty() {
        return Err(Error::invalid("STE matching needs training data"));
    }
    let eval_data = match cfg.eval_rows {
        Some(n) if n < data.len() => data.head(n),
        _ => data.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = BatchSampler::new(data.len(), cfg.batch_size, rng.random());
    let mut optimizer = Optimizer::<T>::new(cfg.optimizer, cfg.learning_rate).with_momentum(cfg.momentum);
    let half = T::from_f64(0.5);

    let mut theta = a.clone();
    let mut best: Option<(f64, usize, PermutationSet)> = None;
    let mut last_scored: Option<PermutationSet> = None;
    let mut batch_losses = Vec::with_capacity(cfg.steps);
    let mut candidates = 0;

    for step in 0..=cfg.steps {
        let (perms, projected) = match cfg.projection {
            Projection::WeightMatching => {
                // Shapes are already checked; failure here means Θ̃_B overflowed
                // the profit matrices.
                let p = weight_matching(&theta, b, cfg.seed.wrapping_add(step as u64))
                    .map_err(|_| Error::Divergence { step })?;
                let projected = apply_permutation(b, &p)?;
                (p, projected)
            }
            Projection::Disabled => (PermutationSet::identity_for(b), theta.clone()),
        };
        let midpoint = interpolate(a, &projected, 0.5)?;

        if last_scored.as_ref() != Some(&perms) {
            let loss = match cfg.projection {
                Projection::WeightMatching => loss_and_accuracy(&midpoint, &eval_data)?.loss,
                // The candidate is always the identity; its score does not
                // depend on Θ̃_B.
                Projection::Disabled => {
                    loss_and_accuracy(&interpolate(a, b, 0.5)?, &eval_data)?.loss
                }
            };
            candidates += 1;
            if best.as_ref().is_none_or(|(l, _, _)| loss < *l) {
                best = Some((loss, step, perms.clone()));
            }
            last_scored = Some(perms);
        }
        if step == cfg.steps {
            break;
        }

        let (x, y) = gather_batch(data, sampler.next_batch());
        let (loss, grads) = loss_and_gradients(&midpoint, x.view(), &y)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        // d midpoint / d Θ̃_B = ½
        optimizer.step(&mut theta, &grads.map(|g| g * half));
        if theta.flat_params().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        batch_losses.push(loss);
        on_step(step, loss);
    }

    let (best_loss, best_step, perms) = best.expect("step 0 is always scored");
    Ok(SteMatching {
        perms,
        best_step,
        best_loss,
        batch_losses,
        candidates,
    })
}
