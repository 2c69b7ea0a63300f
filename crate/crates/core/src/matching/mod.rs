//! Permutation selection: weight matching (coordinate descent), activation
//! and correlation matching, the straight-through estimator, the greedy
//! baseline and multi-model merging.

mod activation;
mod merge;
mod objective;
mod ste;
mod weight;

pub use activation::{activation_matching, correlation_matching, CorrelationMatching, Side, ZeroVarianceUnit};
pub use merge::{merge_many, MergeMany, MAX_MERGE_ROUNDS};
pub use objective::{
    brute_force_soblap, count_permutation_sets, enumerate_permutation_sets, soblap_objective,
    BRUTE_FORCE_SOBLAP_LIMIT,
};
pub use ste::{ste_matching, ste_matching_with, Projection, SteConfig, SteMatching};
pub use weight::{
    greedy_unidirectional_matching, weight_matching, weight_matching_with, WeightMatching,
    WeightMatchingOptions,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{interpolate, Activation, Layer, ModelWeights, PermutationSet};

    const EPS: f64 = 1e-3;

    // Three-layer ReLU nets on a scalar input where, for x > 0, every unit is
    // active or exactly zero, so each network is linear in x.
    fn greedy_trap() -> (ModelWeights<f64>, ModelWeights<f64>) {
        let net = |w2: [[f64; 2]; 2], w3: [f64; 2]| {
            ModelWeights::new(
                vec![
                    Layer::from_rows(&[vec![1.0], vec![1.0 + EPS]], &[0.0, 0.0]).unwrap(),
                    Layer::from_rows(&[w2[0].to_vec(), w2[1].to_vec()], &[0.0, 0.0]).unwrap(),
                    Layer::from_rows(&[w3.to_vec()], &[0.0]).unwrap(),
                ],
                Activation::Relu,
            )
            .unwrap()
        };
        (
            net([[1.0, 0.0], [0.0, EPS]], [1.0, 0.0]),
            net([[0.0, 0.0], [0.0, 1.0]], [0.0, 1.0]),
        )
    }

    fn swap() -> crate::lap::Assignment {
        crate::lap::Assignment::new(vec![1, 0]).unwrap()
    }

    #[test]
    fn greedy_trap_permutations() {
        let (a, b) = greedy_trap();
        assert!(greedy_unidirectional_matching(&a, &b).unwrap().is_identity());
        let both_swapped = PermutationSet::new(vec![swap(), swap()]);
        for seed in 0..8 {
            assert_eq!(weight_matching(&a, &b, seed).unwrap(), both_swapped);
        }
        assert_eq!(brute_force_soblap(&a, &b).unwrap(), both_swapped);
    }

    #[test]
    fn greedy_trap_midpoints() {
        let (a, b) = greedy_trap();
        let greedy = greedy_unidirectional_matching(&a, &b).unwrap();
        let wm = weight_matching(&a, &b, 0).unwrap();
        let mid = |p: &PermutationSet| {
            interpolate(&a, &crate::model::apply_permutation(&b, p).unwrap(), 0.5).unwrap()
        };
        let (g, w) = (mid(&greedy), mid(&wm));
        let greedy_slope = 0.25 + (1.0 + EPS) * (1.0 + EPS) / 4.0;
        let wm_slope = 1.0 + EPS / 2.0;
        for x in [0.1, 0.5, 1.0, 2.0, 7.5] {
            assert!((g.forward(&[x]).unwrap()[0] - greedy_slope * x).abs() < 1e-12);
            assert!((w.forward(&[x]).unwrap()[0] - wm_slope * x).abs() < 1e-12);
        }
        assert!((greedy_slope - 0.5).abs() < 2.0 * EPS);
    }
}
