use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::lap::{solve_lap, ProfitMatrix};
use crate::model::PermutationSet;
use crate::scalar::Scalar;
use crate::train::ActivationRecord;

fn check_records<T: Scalar>(a: &ActivationRecord<T>, b: &ActivationRecord<T>) -> Result<()> {
    if a.widths() != b.widths() {
        return Err(Error::invalid(format!(
            "activation widths differ: {:?} vs {:?}",
            a.widths(),
            b.widths()
        )));
    }
    if a.num_rows() != b.num_rows() {
        return Err(Error::invalid(format!(
            "activation row counts differ: {} vs {}",
            a.num_rows(),
            b.num_rows()
        )));
    }
    Ok(())
}

/// Per layer, the permutation maximizing `⟨P, Z_A Z_Bᵀ⟩_F`, which is the
/// same as minimizing `Σ_i ‖Z_A[:, i] - P Z_B[:, i]‖²`. Layers are solved
/// independently.
pub fn activation_matching<T: Scalar>(
    a: &ActivationRecord<T>,
    b: &ActivationRecord<T>,
) -> Result<PermutationSet> {
    check_records(a, b)?;
    let perms = a
        .layers
        .iter()
        .zip(&b.layers)
        .map(|(za, zb)| {
            let za = za.mapv(Scalar::to_f64);
            let zb = zb.mapv(Scalar::to_f64);
            Ok(solve_lap(&ProfitMatrix::new(za.dot(&zb.t()))?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PermutationSet::new(perms))
}

/// Which model a constant unit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// A hidden unit whose activation never varies over the recorded rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroVarianceUnit {
    pub side: Side,
    pub layer: usize,
    pub unit: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatching {
    pub perms: PermutationSet,
    /// Units whose correlation row or column was set to zero.
    pub zero_variance: Vec<ZeroVarianceUnit>,
}

/// Rows centred and scaled to unit norm; constant rows become zero and are
/// reported.
fn standardize<T: Scalar>(z: &Array2<T>, side: Side, layer: usize, flagged: &mut Vec<ZeroVarianceUnit>) -> Array2<f64> {
    let mut z = z.mapv(Scalar::to_f64);
    for (unit, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        let mean = row.mean().unwrap_or(0.0);
        row -= mean;
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        } else {
            row.fill(0.0);
            flagged.push(ZeroVarianceUnit { side, layer, unit });
        }
    }
    z
}

/// Like [`activation_matching`] but on Pearson correlation coefficients, so
/// per-unit affine rescaling does not affect the result.
pub fn correlation_matching<T: Scalar>(
    a: &ActivationRecord<T>,
    b: &ActivationRecord<T>,
) -> Result<CorrelationMatching> {
    check_records(a, b)?;
    let mut zero_variance = Vec::new();
    let mut perms = Vec::with_capacity(a.layers.len());
    for (layer, (za, zb)) in a.layers.iter().zip(&b.layers).enumerate() {
        let sa = standardize(za, Side::A, layer, &mut zero_variance);
        let sb = standardize(zb, Side::B, layer, &mut zero_variance);
        perms.push(solve_lap(&ProfitMatrix::new(sa.dot(&sb.t()))?));
    }
    Ok(CorrelationMatching {
        perms: PermutationSet::new(perms),
        zero_variance,
    })
}
