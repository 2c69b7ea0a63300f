//! Loss-landscape measurements along linear paths between two models.

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::matching::weight_matching;
use crate::model::{apply_permutation, interpolate, loss_and_accuracy, LossAccuracy, ModelWeights};
use crate::scalar::Scalar;
use crate::train::{train_mlp, TrainConfig};

/// Points on the default λ grid.
pub const DEFAULT_NUM_POINTS: usize = 25;
/// Confidence bins used by [`calibration`].
pub const DEFAULT_CALIBRATION_BINS: usize = 10;

pub const CURVE_CSV_HEADER: &str = "lambda,train_loss,test_loss,train_acc,test_acc";

/// `num_points` evenly spaced values `i / (num_points - 1)`.
pub fn lambda_grid(num_points: usize) -> Result<Vec<f64>> {
    if num_points < 2 {
        return Err(Error::invalid(format!("need at least 2 interpolation points, got {num_points}")));
    }
    let last = (num_points - 1) as f64;
    Ok((0..num_points).map(|i| i as f64 / last).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCurve {
    pub points: Vec<CurvePoint>,
}

impl InterpolationCurve {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn losses(&self, split: Split) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| match split {
                Split::Train => p.train_loss,
                Split::Test => p.test_loss,
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CURVE_CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.lambda, p.train_loss, p.test_loss, p.train_acc, p.test_acc
            ));
        }
        out
    }

    /// JSON array of point records, fields in CSV column order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.points).expect("curve points serialize")
    }
}

/// Loss and accuracy of `(1 - λ) Θ_A + λ Θ_B` on `data` for each λ.
pub fn evaluate_path<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
    data: &Dataset<T>,
    lambdas: &[f64],
) -> Result<Vec<LossAccuracy>> {
    a.check_same_shape(b)?;
    lambdas
        .iter()
        .map(|&l| loss_and_accuracy(&interpolate(a, b, l)?, data))
        .collect()
}

/// Train and test loss/accuracy along the straight line from `a` to `b`.
pub fn interpolation_curve<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
    train: &Dataset<T>,
    test: &Dataset<T>,
    num_points: usize,
) -> Result<InterpolationCurve> {
    let lambdas = lambda_grid(num_points)?;
    let tr = evaluate_path(a, b, train, &lambdas)?;
    let te = evaluate_path(a, b, test, &lambdas)?;
    let points = lambdas
        .iter()
        .zip(tr.iter().zip(&te))
        .map(|(&lambda, (tr, te))| CurvePoint {
            lambda,
            train_loss: tr.loss,
            test_loss: te.loss,
            train_acc: tr.accuracy,
            test_acc: te.accuracy,
        })
        .collect();
    Ok(InterpolationCurve { points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    /// `max_λ L(λ) - ½(L(0) + L(1))`, clamped at 0.
    pub barrier: f64,
    /// The same maximum without clamping.
    pub raw_barrier: f64,
    pub argmax_lambda: f64,
    pub loss_a: f64,
    pub loss_b: f64,
}

/// Barrier of a sampled loss path. The first and last samples are the
/// endpoints; ties in the maximum go to the smallest λ.
pub fn barrier_from_losses(lambdas: &[f64], losses: &[f64]) -> Result<BarrierReport> {
    if lambdas.len() != losses.len() || lambdas.is_empty() {
        return Err(Error::invalid(format!(
            "barrier needs matching non-empty samples, got {} lambdas and {} losses",
            lambdas.len(),
            losses.len()
        )));
    }
    let (loss_a, loss_b) = (losses[0], losses[losses.len() - 1]);
    let mean = 0.5 * (loss_a + loss_b);
    let (argmax_lambda, raw_barrier) = lambdas
        .iter()
        .zip(losses)
        .map(|(&l, &v)| (l, v - mean))
        .fold((lambdas[0], f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    Ok(BarrierReport {
        barrier: raw_barrier.max(0.0),
        raw_barrier,
        argmax_lambda,
        loss_a,
        loss_b,
    })
}

pub fn loss_barrier(curve: &InterpolationCurve, split: Split) -> Result<BarrierReport> {
    barrier_from_losses(&curve.lambdas(), &curve.losses(split))
}

/// Loss barrier on `data` along the straight line from `a` to `b`.
pub fn path_barrier<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
    data: &Dataset<T>,
    num_points: usize,
) -> Result<BarrierReport> {
    let lambdas = lambda_grid(num_points)?;
    let losses: Vec<f64> = evaluate_path(a, b, data, &lambdas)?.iter().map(|r| r.loss).collect();
    barrier_from_losses(&lambdas, &losses)
}

/// Barriers for one pair before and after weight matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairBarriers {
    pub naive: BarrierReport,
    pub matched: BarrierReport,
}

/// Test-split barriers of `(a, b)` and of `(a, π(b))` with `π` from
/// `weight_matching(a, b, seed)`.
pub fn naive_and_matched_barriers<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
    data: &Dataset<T>,
    num_points: usize,
    seed: u64,
) -> Result<PairBarriers> {
    let perms = weight_matching(a, b, seed)?;
    Ok(PairBarriers {
        naive: path_barrier(a, b, data, num_points)?,
        matched: path_barrier(a, &apply_permutation(b, &perms)?, data, num_points)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub width: usize,
    pub seed_a: u64,
    pub seed_b: u64,
    pub naive_barrier: f64,
    pub matched_barrier: f64,
}

/// For every width and seed pair: trains two models whose hidden layers all
/// have that width, then reports the test barriers before and after weight
/// matching.
pub fn width_sweep<T: Scalar>(
    widths: &[usize],
    base: &TrainConfig,
    seed_pairs: &[(u64, u64)],
    train: &Dataset<T>,
    test: &Dataset<T>,
    num_points: usize,
) -> Result<Vec<WidthRow>> {
    if widths.is_empty() || seed_pairs.is_empty() {
        return Err(Error::invalid("width sweep needs at least one width and one seed pair"));
    }
    let mut rows = Vec::with_capacity(widths.len() * seed_pairs.len());
    for &width in widths {
        for &(seed_a, seed_b) in seed_pairs {
            let cfg = |seed| TrainConfig {
                widths: vec![width; base.widths.len().max(1)],
                seed,
                ..base.clone()
            };
            let a = train_mlp(&cfg(seed_a), train)?;
            let b = train_mlp(&cfg(seed_b), train)?;
            let r = naive_and_matched_barriers(&a, &b, test, num_points, seed_a ^ seed_b)?;
            rows.push(WidthRow {
                width,
                seed_a,
                seed_b,
                naive_barrier: r.naive.barrier,
                matched_barrier: r.matched.barrier,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetRow {
    pub epoch: usize,
    pub naive_barrier: f64,
    pub matched_barrier: f64,
}

/// Test barriers per epoch for two training runs checkpointed in lockstep
/// (`a[e]` and `b[e]` are both taken after epoch `e`).
pub fn onset_sweep<T: Scalar>(
    a: &[ModelWeights<T>],
    b: &[ModelWeights<T>],
    test: &Dataset<T>,
    num_points: usize,
    seed: u64,
) -> Result<Vec<OnsetRow>> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "checkpoint lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(epoch, (ma, mb))| {
            let r = naive_and_matched_barriers(ma, mb, test, num_points, seed)?;
            Ok(OnsetRow {
                epoch,
                naive_barrier: r.naive.barrier,
                matched_barrier: r.matched.barrier,
            })
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        vx += (a - mean) * (a - mean);
        vy += (b - mean) * (b - mean);
    }
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share their mean.
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// `bins + 1` equal-width edges over `[0, 1]`.
    pub bin_edges: Vec<f64>,
    pub bin_counts: Vec<usize>,
    /// Mean top-class probability per bin (0 for empty bins).
    pub mean_confidence: Vec<f64>,
    /// Top-1 accuracy per bin (0 for empty bins).
    pub accuracy: Vec<f64>,
    /// Expected calibration error `Σ_b (n_b / n) |acc_b - conf_b|`.
    pub ece: f64,
}

pub fn calibration<T: Scalar>(weights: &ModelWeights<T>, data: &Dataset<T>) -> Result<CalibrationReport> {
    calibration_with_bins(weights, data, DEFAULT_CALIBRATION_BINS)
}

/// Confidence-binned calibration of the softmax outputs. Confidence 1.0
/// falls in the last bin.
pub fn calibration_with_bins<T: Scalar>(
    weights: &ModelWeights<T>,
    data: &Dataset<T>,
    bins: usize,
) -> Result<CalibrationReport> {
    if data.is_empty() || bins == 0 {
        return Err(Error::invalid("calibration needs data and at least one bin"));
    }
    let mut counts = vec![0usize; bins];
    let mut conf_sum = vec![0.0f64; bins];
    let mut correct = vec![0usize; bins];
    const CHUNK: usize = 1024;
    for start in (0..data.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(data.len());
        let logits = weights.forward_batch(data.features().slice(s![start..end, ..]))?;
        for (row, &label) in logits.outer_iter().zip(&data.labels()[start..end]) {
            let row: Vec<f64> = row.iter().map(|&v| Scalar::to_f64(v)).collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
            // First index attaining the maximum, as in loss_and_accuracy.
            let top = row.iter().position(|&v| v == max).unwrap_or(0);
            let confidence = 1.0 / total;
            let bin = ((confidence * bins as f64) as usize).min(bins - 1);
            counts[bin] += 1;
            conf_sum[bin] += confidence;
            correct[bin] += usize::from(top == label);
        }
    }
    let n = data.len() as f64;
    let mean_confidence: Vec<f64> = conf_sum
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let accuracy: Vec<f64> = correct
        .iter()
        .zip(&counts)
        .map(|(&k, &c)| if c > 0 { k as f64 / c as f64 } else { 0.0 })
        .collect();
    let ece = counts
        .iter()
        .zip(mean_confidence.iter().zip(&accuracy))
        .map(|(&c, (conf, acc))| c as f64 / n * (acc - conf).abs())
        .sum();
    Ok(CalibrationReport {
        bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        bin_counts: counts,
        mean_confidence,
        accuracy,
        ece,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::model::{Activation, Layer, PermutationSet};
    use crate::testutil::{random_model, random_perms};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blobs() -> (Dataset<f64>, Dataset<f64>) {
        let d = gen_blobs::<f64>(400, 3, 4, 1.0, 3).unwrap();
        (d.head(300), d.select(&(300..400).collect::<Vec<_>>()))
    }

    #[test]
    fn grid_shape() {
        assert_eq!(lambda_grid(2).unwrap(), vec![0.0, 1.0]);
        assert_eq!(lambda_grid(5).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(lambda_grid(1).is_err());
        let coarse = lambda_grid(25).unwrap();
        let fine = lambda_grid(49).unwrap();
        assert!(coarse.iter().all(|l| fine.contains(l)));
    }

    #[test]
    fn barrier_arithmetic() {
        let r = barrier_from_losses(&[0.0, 0.5, 1.0], &[1.0, 1.5, 1.0]).unwrap();
        assert_eq!(r.barrier, 0.5);
        assert_eq!(r.argmax_lambda, 0.5);
        let dip = barrier_from_losses(&[0.0, 0.5, 1.0], &[1.0, 0.4, 1.0]).unwrap();
        assert_eq!(dip.barrier, 0.0);
        // Unequal endpoints: the larger endpoint already sits above the mean.
        let tilted = barrier_from_losses(&[0.0, 0.5, 1.0], &[1.0, 0.4, 1.2]).unwrap();
        assert!((tilted.barrier - 0.1).abs() < 1e-12);
        assert_eq!(tilted.argmax_lambda, 1.0);
        let flat = barrier_from_losses(&[0.0, 0.5, 1.0], &[0.7; 3]).unwrap();
        assert_eq!((flat.barrier, flat.raw_barrier), (0.0, 0.0));
        assert!(barrier_from_losses(&[0.0], &[]).is_err());
    }

    #[test]
    fn identical_endpoints_give_flat_curve() {
        let (train, test) = blobs();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = random_model::<f64>(&mut rng, &[4, 6, 3]);
        let c = interpolation_curve(&m, &m, &train, &test, 7).unwrap();
        assert!(c.points.windows(2).all(|w| w[0].test_loss == w[1].test_loss));
        assert_eq!(loss_barrier(&c, Split::Test).unwrap().barrier, 0.0);
        assert_eq!(loss_barrier(&c, Split::Train).unwrap().raw_barrier, 0.0);
    }

    #[test]
    fn matched_curve_equals_inverse_permuted_curve() {
        let (train, test) = blobs();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_model::<f64>(&mut rng, &[4, 8, 8, 3]);
        let b = random_model::<f64>(&mut rng, &[4, 8, 8, 3]);
        let p = weight_matching(&a, &b, 0).unwrap();
        let c1 = interpolation_curve(&a, &apply_permutation(&b, &p).unwrap(), &train, &test, 9).unwrap();
        let c2 = interpolation_curve(&apply_permutation(&a, &p.inverse()).unwrap(), &b, &train, &test, 9).unwrap();
        for (x, y) in c1.points.iter().zip(&c2.points) {
            assert!((x.test_loss - y.test_loss).abs() < 1e-5);
            assert!((x.train_loss - y.train_loss).abs() < 1e-5);
        }
    }

    #[test]
    fn csv_and_json_layout() {
        let (train, test) = blobs();
        let m = random_model::<f64>(&mut ChaCha8Rng::seed_from_u64(2), &[4, 5, 3]);
        let c = interpolation_curve(&m, &m, &train, &test, 2).unwrap();
        let csv = c.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CURVE_CSV_HEADER);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[2].starts_with("1,"));
        let parsed: Vec<CurvePoint> = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(parsed, c.points);
        let json = c.to_json();
        let order = ["lambda", "train_loss", "test_loss", "train_acc", "test_acc"].map(|k| json.find(k).unwrap());
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn spearman_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        // Ties share ranks: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3).
        let r = spearman(&[5.0, 5.0, 9.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.75f64.sqrt() * 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn onset_on_identical_runs_is_zero() {
        let (_, test) = blobs();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let run: Vec<_> = (0..3).map(|_| random_model::<f64>(&mut rng, &[4, 6, 3])).collect();
        let rows = onset_sweep(&run, &run, &test, 5, 0).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.matched_barrier == 0.0));
        assert!(onset_sweep(&run, &run[..2], &test, 5, 0).is_err());
        assert_eq!(onset_sweep(&run[..1], &run[..1], &test, 5, 0).unwrap().len(), 1);
    }

    #[test]
    fn width_sweep_is_reproducible_and_matching_helps() {
        let (train, test) = blobs();
        let base = TrainConfig { widths: vec![0, 0], epochs: 2, batch_size: 32, ..TrainConfig::default() };
        let rows = width_sweep(&[6], &base, &[(1, 2)], &train, &test, 5).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].matched_barrier <= rows[0].naive_barrier + 1e-6);
        assert_eq!(rows, width_sweep(&[6], &base, &[(1, 2)], &train, &test, 5).unwrap());
    }

    #[test]
    fn calibration_of_confident_and_uniform_models() {
        // Output = 50 * one-hot of the label through a huge first-layer gain.
        let n = 300;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| f64::from(u8::from(i % 3 == j)));
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let data = Dataset::new(x, labels, 3, Split::Test).unwrap();
        let eye: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| if i == j { 50.0 } else { 0.0 }).collect()).collect();
        let confident = ModelWeights::new(
            vec![Layer::from_rows(&eye, &[0.0; 3]).unwrap(), Layer::from_rows(&eye, &[0.0; 3]).unwrap()],
            Activation::Relu,
        )
        .unwrap();
        let r = calibration(&confident, &data).unwrap();
        assert!(r.ece < 1e-12);
        assert_eq!(r.bin_counts.iter().sum::<usize>(), n);

        let uniform = ModelWeights::<f64>::zeros(&[3, 4, 3]).unwrap();
        let r = calibration(&uniform, &data).unwrap();
        assert_eq!(r.bin_counts[3], n);
        assert!((r.mean_confidence[3] - 1.0 / 3.0).abs() < 1e-12);
        // Ties predict class 0, which is right on a third of balanced data.
        assert!(r.ece < 0.02, "{}", r.ece);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn barrier_invariants(seed in any::<u64>()) {
            let (_, test) = blobs();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_model::<f64>(&mut rng, &[4, 5, 5, 3]);
            let b = random_model::<f64>(&mut rng, &[4, 5, 5, 3]);
            let base = path_barrier(&a, &b, &test, 25).unwrap();
            prop_assert!(base.barrier >= 0.0);
            let fine = path_barrier(&a, &b, &test, 49).unwrap();
            prop_assert!(fine.barrier >= base.barrier - 1e-6);
            let p: PermutationSet = random_perms(&mut rng, &a.hidden_widths());
            let permuted = path_barrier(
                &apply_permutation(&a, &p).unwrap(),
                &apply_permutation(&b, &p).unwrap(),
                &test,
                25,
            )
            .unwrap();
            prop_assert!((permuted.barrier - base.barrier).abs() < 1e-6);
        }
    }
}
