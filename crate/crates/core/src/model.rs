//! MLP weights, forward evaluation and hidden-unit permutations.

use std::fmt;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lap::Assignment;
use crate::scalar::Scalar;

/// Rows evaluated per forward chunk when scoring a whole dataset.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            _ => None,
        }
    }

    pub(crate) fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => {
                if v > T::zero() {
                    v
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// One dense layer `z -> weight · z + bias`; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f32> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn new(weight: Array2<T>, bias: Array1<T>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::invalid(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        Ok(Layer { weight, bias })
    }

    pub fn from_rows(weight: &[Vec<f64>], bias: &[f64]) -> Result<Self> {
        let rows = weight.len();
        let cols = weight.first().map_or(0, Vec::len);
        if weight.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged weight rows"));
        }
        let flat = weight.iter().flatten().map(|&v| T::from_f64(v)).collect();
        Layer::new(
            Array2::from_shape_vec((rows, cols), flat).expect("shape checked"),
            bias.iter().map(|&v| T::from_f64(v)).collect(),
        )
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of an `L`-layer MLP. Hidden layers use `activation`; the last
/// layer produces raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T = f32> {
    layers: Vec<Layer<T>>,
    activation: Activation,
}

impl<T: Scalar> ModelWeights<T> {
    pub fn new(layers: Vec<Layer<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a model needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(Error::invalid(format!(
                    "layer {} expects {} inputs but layer {l} has {} outputs",
                    l + 1,
                    pair[1].inputs(),
                    pair[0].outputs()
                )));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::invalid(format!(
                    "layer {l}: weight has {} rows but bias has {} entries",
                    layer.weight.nrows(),
                    layer.bias.len()
                )));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(ModelWeights { layers, activation })
    }

    /// All-zero model with the given layer widths `(d_1, .., d_{L+1})`.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("need at least input and output widths"));
        }
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        ModelWeights::new(layers, Activation::Relu)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Skips validation; used for gradient buffers, which may hold non-finite
    /// values that the caller reports separately.
    pub(crate) fn from_layers_unchecked(layers: Vec<Layer<T>>, activation: Activation) -> Self {
        ModelWeights { layers, activation }
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Layer widths `(d_1, .., d_{L+1})`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    /// Widths of the permutable hidden layers `(d_2, .., d_L)`.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::outputs)
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::invalid(format!(
                "model shapes differ: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    /// Logits for a single input vector.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward_batch(x)?.row(0).to_vec())
    }

    /// Logits for each row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward_recording(x)?.pop().expect("at least one layer"))
    }

    /// Outputs of every layer for each row of `x`: post-activation values for
    /// hidden layers followed by the logits, each `n x d`.
    pub fn forward_recording(&self, x: ArrayView2<'_, T>) -> Result<Vec<Array2<T>>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has dimension {} but the model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut outputs: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { outputs[l - 1].view() };
            let mut z = input.dot(&layer.weight.t());
            z += &layer.bias;
            if l < last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            outputs.push(z);
        }
        Ok(outputs)
    }

    /// Elementwise combination with a shape-identical model.
    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other)?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| Layer {
                weight: Zip::from(&a.weight).and(&b.weight).map_collect(|&x, &y| f(x, y)),
                bias: Zip::from(&a.bias).and(&b.bias).map_collect(|&x, &y| f(x, y)),
            })
            .collect();
        Ok(ModelWeights {
            layers,
            activation: self.activation,
        })
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        ModelWeights {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.mapv(&mut f),
                    bias: l.bias.mapv(&mut f),
                })
                .collect(),
            activation: self.activation,
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.mapv(|v| U::from_f64(v.to_f64())),
                    bias: l.bias.mapv(|v| U::from_f64(v.to_f64())),
                })
                .collect(),
            activation: self.activation,
        }
    }

    /// All parameters in layer order, weight (row-major) before bias.
    pub fn flat_params(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
    }

    /// `vec(self) · vec(other)`, accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .flat_params()
            .zip(other.flat_params())
            .map(|(a, b)| a.to_f64() * b.to_f64())
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .flat_params()
            .zip(other.flat_params())
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max))
    }
}

/// One permutation per hidden layer; `perms[l]` reorders the outputs of
/// layer `l`. Input and output units are never permuted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationSet {
    perms: Vec<Assignment>,
}

impl PermutationSet {
    pub fn new(perms: Vec<Assignment>) -> Self {
        PermutationSet { perms }
    }

    pub fn identity(hidden_widths: &[usize]) -> Self {
        PermutationSet {
            perms: hidden_widths.iter().map(|&d| Assignment::identity(d)).collect(),
        }
    }

    pub fn identity_for<T: Scalar>(model: &ModelWeights<T>) -> Self {
        Self::identity(&model.hidden_widths())
    }

    /// Uniformly random permutations of the given widths.
    pub fn random(hidden_widths: &[usize], rng: &mut impl Rng) -> Self {
        PermutationSet {
            perms: hidden_widths
                .iter()
                .map(|&d| {
                    let mut p: Vec<usize> = (0..d).collect();
                    p.shuffle(rng);
                    Assignment::new(p).expect("shuffle of 0..d")
                })
                .collect(),
        }
    }

    pub fn perms(&self) -> &[Assignment] {
        &self.perms
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn get(&self, layer: usize) -> &Assignment {
        &self.perms[layer]
    }

    pub(crate) fn set(&mut self, layer: usize, perm: Assignment) {
        self.perms[layer] = perm;
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(Assignment::is_identity)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.perms.iter().map(Assignment::len).collect()
    }

    pub fn inverse(&self) -> Self {
        PermutationSet {
            perms: self.perms.iter().map(Assignment::inverse).collect(),
        }
    }

    /// Layerwise `self · inner`: applying `inner` and then `self` equals
    /// applying `self.compose(inner)` once.
    pub fn compose(&self, inner: &PermutationSet) -> Self {
        assert_eq!(self.widths(), inner.widths(), "permutation sets differ in shape");
        PermutationSet {
            perms: self
                .perms
                .iter()
                .zip(&inner.perms)
                .map(|(outer, inner)| outer.compose(inner))
                .collect(),
        }
    }

    pub fn check_fits<T: Scalar>(&self, model: &ModelWeights<T>) -> Result<()> {
        let hidden = model.hidden_widths();
        if self.widths() != hidden {
            return Err(Error::invalid(format!(
                "permutation widths {:?} do not match hidden widths {hidden:?}",
                self.widths()
            )));
        }
        Ok(())
    }

    /// Text form: one line per hidden layer, space-separated indices.
    pub fn to_text(&self) -> String {
        self.perms.iter().map(|p| format!("{p}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perms = text
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(n, line)| {
                let perm = line
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<usize>().map_err(|e| {
                            Error::invalid(format!("line {}: bad index {tok:?}: {e}", n + 1))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Assignment::new(perm)
                    .map_err(|e| Error::invalid(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PermutationSet { perms })
    }
}

impl fmt::Display for PermutationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn gather_rows<T: Scalar>(m: ArrayView2<'_, T>, perm: &Assignment) -> Array2<T> {
    m.select(Axis(0), perm.as_slice())
}

fn gather_cols<T: Scalar>(m: ArrayView2<'_, T>, perm: &Assignment) -> Array2<T> {
    m.select(Axis(1), perm.as_slice())
}

fn gather_vec<T: Scalar>(v: ArrayView1<'_, T>, perm: &Assignment) -> Array1<T> {
    perm.as_slice().iter().map(|&i| v[i]).collect()
}

/// `π(Θ)`: layer `l` becomes `P_l W_l P_{l-1}ᵀ` with bias `P_l b_l`, where
/// `P_0` and `P_L` are identities. The result computes the same function.
pub fn apply_permutation<T: Scalar>(
    weights: &ModelWeights<T>,
    perms: &PermutationSet,
) -> Result<ModelWeights<T>> {
    perms.check_fits(weights)?;
    let last = weights.num_layers() - 1;
    let layers = weights
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let mut weight = layer.weight.clone();
            let mut bias = layer.bias.clone();
            if l < last {
                weight = gather_rows(weight.view(), perms.get(l));
                bias = gather_vec(bias.view(), perms.get(l));
            }
            if l > 0 {
                weight = gather_cols(weight.view(), perms.get(l - 1));
            }
            Layer { weight, bias }
        })
        .collect();
    Ok(ModelWeights {
        layers,
        activation: weights.activation,
    })
}

/// `(1 - λ) Θ_A + λ Θ_B`, exact at `λ ∈ {0, 1}` and wherever the endpoints agree.
pub fn interpolate<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
    lambda: f64,
) -> Result<ModelWeights<T>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    let l = T::from_f64(lambda);
    let one_minus = T::from_f64(1.0 - lambda);
    a.zip_map(b, |x, y| if x == y { x } else { one_minus * x + l * y })
}

/// Uniform mean of shape-identical models.
pub fn average<T: Scalar>(models: &[ModelWeights<T>]) -> Result<ModelWeights<T>> {
    let (first, rest) = models
        .split_first()
        .ok_or_else(|| Error::invalid("cannot average zero models"))?;
    // Offsets from the first model keep the mean exact where all inputs agree.
    let mut offset = first.map(|_| T::zero());
    for m in rest {
        offset = offset.zip_map(&m.zip_map(first, |x, y| x - y)?, |s, d| s + d)?;
    }
    let n = T::from_f64(models.len() as f64);
    first.zip_map(&offset, |x, d| x + d / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossAccuracy {
    pub loss: f64,
    pub accuracy: f64,
}

/// Per-row softmax cross-entropy and correctness for a block of logits.
pub(crate) fn score_logits<'a, T: Scalar>(
    logits: ArrayView2<'a, T>,
    labels: &'a [usize],
) -> impl Iterator<Item = (f64, bool)> + 'a {
    logits.into_outer_iter().zip(labels).map(|(row, &label)| {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.to_f64()));
        let log_sum = row.iter().map(|&v| (v.to_f64() - max).exp()).sum::<f64>().ln() + max;
        let argmax = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v.to_f64() > bv {
                    (i, v.to_f64())
                } else {
                    (bi, bv)
                }
            })
            .0;
        (log_sum - row[label].to_f64(), argmax == label)
    })
}

/// Mean softmax cross-entropy and top-1 accuracy over `data`.
pub fn loss_and_accuracy<T: Scalar>(
    weights: &ModelWeights<T>,
    data: &Dataset<T>,
) -> Result<LossAccuracy> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    if data.num_classes() > weights.output_dim() {
        return Err(Error::invalid(format!(
            "dataset has {} classes but the model has {} outputs",
            data.num_classes(),
            weights.output_dim()
        )));
    }
    let (mut loss, mut correct) = (0.0f64, 0usize);
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let logits = weights.forward_batch(data.features().slice(s![start..end, ..]))?;
        for (l, ok) in score_logits(logits.view(), &data.labels()[start..end]) {
            loss += l;
            correct += usize::from(ok);
        }
    }
    let n = data.len() as f64;
    Ok(LossAccuracy {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::testutil::{random_model, random_perms};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_outputs_zero() {
        let m = ModelWeights::<f32>::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let m = ModelWeights::new(
            vec![Layer::new(Array2::<f64>::eye(3), Array1::zeros(3)).unwrap()],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let m = ModelWeights::<f32>::zeros(&[3, 2]).unwrap();
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn construction_checks_chain() {
        let l1 = Layer::<f32>::new(Array2::zeros((4, 3)), Array1::zeros(4)).unwrap();
        let l2 = Layer::<f32>::new(Array2::zeros((2, 5)), Array1::zeros(2)).unwrap();
        assert!(ModelWeights::new(vec![l1, l2], Activation::Relu).is_err());
        assert!(Layer::<f32>::new(Array2::zeros((2, 2)), Array1::zeros(3)).is_err());
        let bad = Layer::new(Array2::from_elem((1, 1), f32::NAN), Array1::zeros(1)).unwrap();
        assert!(ModelWeights::new(vec![bad], Activation::Relu).is_err());
    }

    #[test]
    fn identity_permutation_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model::<f32>(&mut rng, &[5, 4, 3, 2]);
        let p = apply_permutation(&m, &PermutationSet::identity_for(&m)).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn permutation_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_model::<f32>(&mut rng, &[6, 8, 7, 3]);
        let pi = random_perms(&mut rng, &m.hidden_widths());
        let back = apply_permutation(&apply_permutation(&m, &pi).unwrap(), &pi.inverse()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn permutation_dimension_mismatch() {
        let m = ModelWeights::<f32>::zeros(&[3, 4, 2]).unwrap();
        assert!(apply_permutation(&m, &PermutationSet::identity(&[3])).is_err());
    }

    #[test]
    fn interpolation_endpoints_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_model::<f32>(&mut rng, &[4, 5, 3]);
        let b = random_model::<f32>(&mut rng, &[4, 5, 3]);
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
        assert!(interpolate(&a, &b, 1.5).is_err());
        assert!(interpolate(&a, &b, -0.1).is_err());
        let c = random_model::<f32>(&mut rng, &[4, 6, 3]);
        assert!(interpolate(&a, &c, 0.5).is_err());
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let m = ModelWeights::<f64>::zeros(&[3, 4, 5]).unwrap();
        let x = Array2::from_shape_fn((10, 3), |(i, j)| (i * 3 + j) as f64);
        let data = Dataset::new(x, (0..10).map(|i| i % 5).collect(), 5, Split::Test).unwrap();
        let r = loss_and_accuracy(&m, &data).unwrap();
        assert!((r.loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_model_is_accurate() {
        let w = Array2::from_shape_vec((2, 2), vec![50.0, 0.0, 0.0, 50.0]).unwrap();
        let m = ModelWeights::new(vec![Layer::new(w, Array1::zeros(2)).unwrap()], Activation::Relu)
            .unwrap();
        let x = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let data = Dataset::new(x, vec![0, 1], 2, Split::Test).unwrap();
        let r = loss_and_accuracy(&m, &data).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.loss < 1e-20);

        let empty = Dataset::new(Array2::zeros((0, 2)), vec![], 2, Split::Test).unwrap();
        assert!(loss_and_accuracy(&m, &empty).is_err());
    }

    #[test]
    fn permutation_text_round_trip() {
        let pi = PermutationSet::new(vec![
            Assignment::new(vec![2, 0, 1]).unwrap(),
            Assignment::new(vec![1, 0]).unwrap(),
        ]);
        assert_eq!(pi.to_text(), "2 0 1\n1 0\n");
        assert_eq!(PermutationSet::from_text(&pi.to_text()).unwrap(), pi);
        assert!(PermutationSet::from_text("0 0\n").is_err());
        assert!(PermutationSet::from_text("0 x\n").is_err());
    }

    #[test]
    fn average_of_identical_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_model::<f64>(&mut rng, &[3, 4, 2]);
        let avg = average(&[m.clone(), m.clone(), m.clone()]).unwrap();
        assert!(avg.max_abs_diff(&m).unwrap() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn permutations_preserve_function(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = [5, rng.random_range(2..9), rng.random_range(2..9), rng.random_range(2..9), 3];
            let m = random_model::<f32>(&mut rng, &dims);
            let pi = random_perms(&mut rng, &m.hidden_widths());
            let p = apply_permutation(&m, &pi).unwrap();
            let x = Array2::from_shape_fn((20, 5), |_| rng.random_range(-2.0f32..2.0));
            let d = (&m.forward_batch(x.view()).unwrap() - &p.forward_batch(x.view()).unwrap())
                .iter()
                .fold(0.0f32, |acc, v| acc.max(v.abs()));
            prop_assert!(d < 1e-5);

            let labels = (0..20).map(|i| i % 3).collect();
            let data = Dataset::new(x, labels, 3, Split::Train).unwrap();
            let la = loss_and_accuracy(&m, &data).unwrap();
            let lb = loss_and_accuracy(&p, &data).unwrap();
            prop_assert!((la.loss - lb.loss).abs() < 1e-6);
            prop_assert_eq!(la.accuracy, lb.accuracy);
        }

        #[test]
        fn permutation_composition(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model::<f32>(&mut rng, &[3, 6, 5, 2]);
            let p1 = random_perms(&mut rng, &m.hidden_widths());
            let p2 = random_perms(&mut rng, &m.hidden_widths());
            let twice = apply_permutation(&apply_permutation(&m, &p1).unwrap(), &p2).unwrap();
            let once = apply_permutation(&m, &p2.compose(&p1)).unwrap();
            prop_assert_eq!(twice, once);
        }

        #[test]
        fn self_interpolation_is_identity(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_model::<f32>(&mut rng, &[3, 4, 2]);
            prop_assert_eq!(interpolate(&m, &m, lambda).unwrap(), m);
        }
    }
}
