//! Two perfect classifiers of the quadrant task that no hidden-unit
//! permutation connects linearly.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::lambda_grid;
use crate::matching::enumerate_permutation_sets;
use crate::model::{apply_permutation, interpolate, Activation, Layer, ModelWeights, PermutationSet};

/// Interior error must exceed both endpoints by more than this.
pub const MIN_BARRIER: f64 = 0.01;

pub const CSV_HEADER: &str = "perm_id,lambda,error";

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexamplePair {
    pub a: ModelWeights<f64>,
    pub b: ModelWeights<f64>,
}

fn layer(w: [[f64; 2]; 2], b: [f64; 2]) -> Layer<f64> {
    Layer::from_rows(&[w[0].to_vec(), w[1].to_vec()], &b).expect("2x2 layer")
}

/// Network A tests `x2 > 0` in its first layer and `x1 < 0` in its second;
/// network B does the same tests in the opposite order.
pub fn build_counterexample() -> CounterexamplePair {
    let out = || Layer::from_rows(&[vec![-1.0, -1.0]], &[0.0]).expect("output layer");
    let a = ModelWeights::new(
        vec![
            layer([[-1.0, 0.0], [0.0, -1.0]], [1.0, 0.0]),
            layer([[-1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]),
            out(),
        ],
        Activation::Relu,
    )
    .expect("valid network");
    let b = ModelWeights::new(
        vec![
            layer([[1.0, 0.0], [0.0, 1.0]], [0.0, 1.0]),
            layer([[1.0, 0.0], [0.0, -1.0]], [0.0, 1.0]),
            out(),
        ],
        Activation::Relu,
    )
    .expect("valid network");
    CounterexamplePair { a, b }
}

/// Predictions of a single-output network: positive iff `f(x) >= 0`.
pub fn predict(model: &ModelWeights<f64>, data: &Dataset<f64>) -> Result<Vec<usize>> {
    if model.output_dim() != 1 {
        return Err(Error::invalid(format!(
            "sign classifier needs 1 output, model has {}",
            model.output_dim()
        )));
    }
    let f = model.forward_batch(data.features())?;
    Ok(f.column(0).iter().map(|&v| usize::from(v >= 0.0)).collect())
}

/// Fraction of rows where the sign prediction disagrees with the label.
pub fn classification_error(model: &ModelWeights<f64>, data: &Dataset<f64>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let wrong = predict(model, data)?
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p != l)
        .count();
    Ok(wrong as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationCurve {
    pub perm_id: usize,
    /// Text form of the permutation applied to B.
    pub perms: String,
    pub lambdas: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub argmax_lambda: f64,
    /// Largest interior error minus the larger endpoint error.
    pub barrier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoLmcReport {
    pub curves: Vec<PermutationCurve>,
    /// Every permutation has an interior barrier above [`MIN_BARRIER`].
    pub all_positive: bool,
}

impl NoLmcReport {
    pub fn min_barrier(&self) -> f64 {
        self.curves.iter().map(|c| c.barrier).fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.curves {
            for (l, e) in c.lambdas.iter().zip(&c.errors) {
                out.push_str(&format!("{},{},{}\n", c.perm_id, l, e));
            }
        }
        out
    }
}

/// Classification error along `(1 - λ) Θ_A + λ π(Θ_B)` for every `π`.
/// Permutation ids follow lexicographic order, so id 0 is the identity.
pub fn verify_no_lmc(pair: &CounterexamplePair, data: &Dataset<f64>, num_lambdas: usize) -> Result<NoLmcReport> {
    let lambdas = lambda_grid(num_lambdas)?;
    let curves = enumerate_permutation_sets(&pair.b.hidden_widths())
        .enumerate()
        .map(|(perm_id, perms)| curve_for(pair, data, &lambdas, perm_id, &perms))
        .collect::<Result<Vec<_>>>()?;
    let all_positive = curves.iter().all(|c| c.barrier > MIN_BARRIER);
    Ok(NoLmcReport { curves, all_positive })
}

fn curve_for(
    pair: &CounterexamplePair,
    data: &Dataset<f64>,
    lambdas: &[f64],
    perm_id: usize,
    perms: &PermutationSet,
) -> Result<PermutationCurve> {
    let b = apply_permutation(&pair.b, perms)?;
    let errors = lambdas
        .iter()
        .map(|&l| classification_error(&interpolate(&pair.a, &b, l)?, data))
        .collect::<Result<Vec<f64>>>()?;
    let (argmax_lambda, max_error) = lambdas
        .iter()
        .zip(&errors)
        .fold((lambdas[0], f64::NEG_INFINITY), |best, (&l, &e)| if e > best.1 { (l, e) } else { best });
    let endpoint = errors[0].max(errors[errors.len() - 1]);
    let interior = errors[1..errors.len() - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(PermutationCurve {
        perm_id,
        perms: perms.to_text().trim_end().replace('\n', " | "),
        lambdas: lambdas.to_vec(),
        errors,
        max_error,
        argmax_lambda,
        barrier: interior - endpoint,
    })
}
