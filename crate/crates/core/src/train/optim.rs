use ndarray::Zip;

use crate::model::ModelWeights;
use crate::scalar::Scalar;

use super::config::{OptimizerKind, TrainConfig};

/// First-order optimizer state. SGD keeps one velocity buffer, Adam two
/// moment buffers; all have the model's shape.
#[derive(Debug, Clone)]
pub struct Optimizer<T: Scalar> {
    kind: OptimizerKind,
    learning_rate: T,
    momentum: T,
    beta1: T,
    beta2: T,
    weight_decay: T,
    first: Option<ModelWeights<T>>,
    second: Option<ModelWeights<T>>,
    steps: i32,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Optimizer {
            kind,
            learning_rate: T::from_f64(learning_rate),
            momentum: T::from_f64(0.9),
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            weight_decay: T::zero(),
            first: None,
            second: None,
            steps: 0,
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Optimizer {
            momentum: T::from_f64(cfg.momentum),
            beta1: T::from_f64(cfg.beta1),
            beta2: T::from_f64(cfg.beta2),
            weight_decay: T::from_f64(cfg.weight_decay),
            ..Optimizer::new(cfg.optimizer, cfg.learning_rate)
        }
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = T::from_f64(momentum);
        self
    }

    /// One update of `params` in place. `grads` must have the same shape.
    pub fn step(&mut self, params: &mut ModelWeights<T>, grads: &ModelWeights<T>) {
        self.steps += 1;
        let zeros = || grads.map(|_| T::zero());
        let first = self.first.get_or_insert_with(zeros);
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::SgdMomentum => {
                let (lr, mu) = (self.learning_rate, self.momentum);
                for ((p, g), v) in params
                    .layers_mut()
                    .iter_mut()
                    .zip(grads.layers())
                    .zip(first.layers_mut())
                {
                    let update = |p: &mut T, &g: &T, v: &mut T| {
                        *v = mu * *v + g + wd * *p;
                        *p -= lr * *v;
                    };
                    Zip::from(&mut p.weight).and(&g.weight).and(&mut v.weight).for_each(update);
                    Zip::from(&mut p.bias).and(&g.bias).and(&mut v.bias).for_each(update);
                }
            }
            OptimizerKind::Adam => {
                let second = self.second.get_or_insert_with(zeros);
                let (b1, b2) = (self.beta1, self.beta2);
                let one = T::one();
                let correction1 = one - b1.powi(self.steps);
                let correction2 = one - b2.powi(self.steps);
                let step_size = self.learning_rate / correction1;
                let eps = T::from_f64(1e-8);
                for (((p, g), m), v) in params
                    .layers_mut()
                    .iter_mut()
                    .zip(grads.layers())
                    .zip(first.layers_mut())
                    .zip(second.layers_mut())
                {
                    let update = |p: &mut T, &g: &T, m: &mut T, v: &mut T| {
                        let g = g + wd * *p;
                        *m = b1 * *m + (one - b1) * g;
                        *v = b2 * *v + (one - b2) * g * g;
                        *p -= step_size * *m / ((*v / correction2).sqrt() + eps);
                    };
                    Zip::from(&mut p.weight)
                        .and(&g.weight)
                        .and(&mut m.weight)
                        .and(&mut v.weight)
                        .for_each(update);
                    Zip::from(&mut p.bias)
                        .and(&g.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .for_each(update);
                }
            }
        }
    }
}
