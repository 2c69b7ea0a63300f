use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{apply_permutation, average, ModelWeights};
use crate::scalar::Scalar;

use super::weight::weight_matching;

/// Safety cap on alignment rounds.
pub const MAX_MERGE_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct MergeMany<T = f32> {
    /// Uniform average of the aligned models.
    pub merged: ModelWeights<T>,
    /// The inputs after their final permutations.
    pub aligned: Vec<ModelWeights<T>>,
    /// Rounds run, including the final round that changed nothing.
    pub rounds: usize,
    pub converged: bool,
}

/// Repeatedly aligns each model (in a seeded random order per round) to the
/// average of the others and replaces it with its permuted version, until a
/// whole round leaves every model unchanged. Returns the uniform average.
pub fn merge_many<T: Scalar>(models: &[ModelWeights<T>], seed: u64) -> Result<MergeMany<T>> {
    if models.len() < 2 {
        return Err(Error::invalid(format!("merging needs at least 2 models, got {}", models.len())));
    }
    for m in &models[1..] {
        models[0].check_same_shape(m)?;
    }
    let mut models = models.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..models.len()).collect();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < MAX_MERGE_ROUNDS {
        rounds += 1;
        order.shuffle(&mut rng);
        let mut changed = false;
        for &i in &order {
            let others: Vec<ModelWeights<T>> = models
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, m)| m.clone())
                .collect();
            let target = average(&others)?;
            let perms = weight_matching(&target, &models[i], rng.random())?;
            if !perms.is_identity() {
                models[i] = apply_permutation(&models[i], &perms)?;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(MergeMany {
        merged: average(&models)?,
        aligned: models,
        rounds,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::model::{interpolate, loss_and_accuracy, PermutationSet};
    use crate::testutil::{random_model, random_perms};
    use crate::train::{train_mlp, TrainConfig};

    #[test]
    fn identical_models_merge_to_themselves() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = random_model::<f32>(&mut rng, &[5, 8, 6, 3]);
        let r = merge_many(&[m.clone(), m.clone(), m.clone()], 1).unwrap();
        assert_eq!(r.merged, m);
        assert_eq!(r.rounds, 1);
    }

    #[test]
    fn permuted_copies_merge_to_original_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model::<f64>(&mut rng, &[5, 10, 10, 3]);
        let copies: Vec<_> = (0..4)
            .map(|_| apply_permutation(&m, &random_perms(&mut rng, &m.hidden_widths())).unwrap())
            .collect();
        let r = merge_many(&copies, 2).unwrap();
        assert!(r.converged);
        let x = ndarray::Array2::from_shape_fn((7, 5), |(i, j)| (i as f64 - j as f64) * 0.3);
        let diff = (&r.merged.forward_batch(x.view()).unwrap() - &m.forward_batch(x.view()).unwrap())
            .mapv(f64::abs)
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(diff < 1e-9);
    }

    #[test]
    fn two_models_reduce_to_pairwise_matching() {
        let data = gen_blobs::<f64>(300, 3, 4, 1.0, 9).unwrap();
        let cfg = |seed| TrainConfig { widths: vec![12, 12], epochs: 3, batch_size: 32, seed, ..TrainConfig::default() };
        let a = train_mlp(&cfg(1), &data).unwrap();
        let b = train_mlp(&cfg(2), &data).unwrap();

        let ab = weight_matching(&a, &b, 0).unwrap();
        let ba = weight_matching(&b, &a, 0).unwrap();
        assert_eq!(ba, ab.inverse());

        let r = merge_many(&[a.clone(), b.clone()], 5).unwrap();
        assert!(r.converged);
        let merged_loss = loss_and_accuracy(&r.merged, &data).unwrap().loss;
        // Coordinate descent depends on its seed, so compare against the
        // pairwise midpoints reachable from a range of seeds.
        let pairwise: Vec<f64> = (0..16)
            .map(|s| {
                let p = weight_matching(&a, &b, s).unwrap();
                let mid = interpolate(&a, &apply_permutation(&b, &p).unwrap(), 0.5).unwrap();
                loss_and_accuracy(&mid, &data).unwrap().loss
            })
            .collect();
        assert!(
            pairwise.iter().any(|l| (l - merged_loss).abs() < 1e-6),
            "{merged_loss} not in {pairwise:?}"
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = ModelWeights::<f32>::zeros(&[2, 3, 2]).unwrap();
        let b = ModelWeights::<f32>::zeros(&[2, 4, 2]).unwrap();
        assert!(merge_many(std::slice::from_ref(&a), 0).is_err());
        assert!(merge_many(&[a, b], 0).is_err());
        let _ = PermutationSet::identity(&[3]);
    }
}
