use crate::error::{Error, Result};
use crate::lap::{next_permutation, Assignment};
use crate::model::{ModelWeights, PermutationSet};
use crate::scalar::Scalar;

/// Exhaustive search refuses problems with more candidate permutation sets.
pub const BRUTE_FORCE_SOBLAP_LIMIT: u64 = 1_000_000;

/// `vec(Θ_A) · vec(π(Θ_B))`, biases included:
/// `Σ_l ⟨W_l^A, P_l W_l^B P_{l-1}ᵀ⟩_F + Σ_l ⟨b_l^A, P_l b_l^B⟩`.
///
/// Evaluated by indexing into `Θ_B` directly rather than materialising
/// `π(Θ_B)`, and accumulated in `f64`.
pub fn soblap_objective<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
    perms: &PermutationSet,
) -> Result<f64> {
    a.check_same_shape(b)?;
    perms.check_fits(b)?;
    let last = a.num_layers() - 1;
    let mut total = 0.0f64;
    for (l, (la, lb)) in a.layers().iter().zip(b.layers()).enumerate() {
        let row_perm = (l < last).then(|| perms.get(l).as_slice());
        let col_perm = (l > 0).then(|| perms.get(l - 1).as_slice());
        for i in 0..la.outputs() {
            let bi = row_perm.map_or(i, |p| p[i]);
            for j in 0..la.inputs() {
                let bj = col_perm.map_or(j, |p| p[j]);
                total += la.weight[[i, j]].to_f64() * lb.weight[[bi, bj]].to_f64();
            }
            total += la.bias[i].to_f64() * lb.bias[bi].to_f64();
        }
    }
    Ok(total)
}

/// Number of permutation sets over `widths`, or `None` past `u64`.
pub fn count_permutation_sets(widths: &[usize]) -> Option<u64> {
    widths.iter().try_fold(1u64, |acc, &d| {
        (1..=d as u64).try_fold(acc, |a, k| a.checked_mul(k))
    })
}

/// Every permutation set over `widths`, in lexicographic order with layer 0
/// most significant.
pub fn enumerate_permutation_sets(widths: &[usize]) -> impl Iterator<Item = PermutationSet> {
    let mut current: Option<Vec<Vec<usize>>> = Some(widths.iter().map(|&d| (0..d).collect()).collect());
    std::iter::from_fn(move || {
        let out = current.clone()?;
        let mut next = out.clone();
        // Odometer: advance the last layer, carrying leftwards on wrap-around.
        let mut advanced = false;
        for perm in next.iter_mut().rev() {
            if next_permutation(perm) {
                advanced = true;
                break;
            }
            perm.sort_unstable();
        }
        current = advanced.then_some(next);
        Some(PermutationSet::new(
            out.into_iter()
                .map(|p| Assignment::new(p).expect("enumerated permutation"))
                .collect(),
        ))
    })
}

/// Globally optimal SOBLAP permutation by enumeration; ties go to the
/// lexicographically first candidate.
pub fn brute_force_soblap<T: Scalar>(
    a: &ModelWeights<T>,
    b: &ModelWeights<T>,
) -> Result<PermutationSet> {
    a.check_same_shape(b)?;
    let widths = b.hidden_widths();
    let count = count_permutation_sets(&widths);
    if count.is_none_or(|c| c > BRUTE_FORCE_SOBLAP_LIMIT) {
        return Err(Error::SizeLimit {
            what: format!("permutation sets over hidden widths {widths:?}"),
            limit: BRUTE_FORCE_SOBLAP_LIMIT,
        });
    }
    let mut best: Option<(f64, PermutationSet)> = None;
    for candidate in enumerate_permutation_sets(&widths) {
        let value = soblap_objective(a, b, &candidate)?;
        if best.as_ref().is_none_or(|(v, _)| value > *v) {
            best = Some((value, candidate));
        }
    }
    Ok(best.expect("at least the identity").1)
}
