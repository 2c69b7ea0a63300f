use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::model::{score_logits, Layer, ModelWeights};
use crate::scalar::Scalar;

/// Mean softmax cross-entropy over the rows of `x` and its gradient with
/// respect to every weight and bias. The gradient has the model's shape.
pub fn loss_and_gradients<T: Scalar>(
    weights: &ModelWeights<T>,
    x: ArrayView2<'_, T>,
    labels: &[usize],
) -> Result<(f64, ModelWeights<T>)> {
    let n = x.nrows();
    if n == 0 || n != labels.len() {
        return Err(Error::invalid(format!(
            "batch has {n} rows and {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= weights.output_dim()) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {} outputs",
            weights.output_dim()
        )));
    }
    let outputs = weights.forward_recording(x)?;
    let logits = outputs.last().expect("at least one layer");
    let loss = score_logits(logits.view(), labels).map(|(l, _)| l).sum::<f64>() / n as f64;

    // d loss / d logits = (softmax - onehot) / n
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut delta = logits.clone();
    for (mut row, &label) in delta.outer_iter_mut().zip(labels) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum * inv_n);
        row[label] -= inv_n;
    }

    let layers = weights.layers();
    let mut grads: Vec<Layer<T>> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let input = if l == 0 { x } else { outputs[l - 1].view() };
        let weight_grad: Array2<T> = delta.t().dot(&input);
        let bias_grad: Array1<T> = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut upstream = delta.dot(&layers[l].weight);
            // ReLU passes gradient only where the unit was active.
            Zip::from(&mut upstream)
                .and(&outputs[l - 1])
                .for_each(|g, &h| {
                    if h <= T::zero() {
                        *g = T::zero();
                    }
                });
            delta = upstream;
        }
        grads.push(Layer {
            weight: weight_grad,
            bias: bias_grad,
        });
    }
    grads.reverse();
    Ok((
        loss,
        ModelWeights::from_layers_unchecked(grads, weights.activation()),
    ))
}
