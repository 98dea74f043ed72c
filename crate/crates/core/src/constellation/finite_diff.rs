//! Coefficient recovery by finite differences of numeric error distances.
//!
//! Error distances are linear in the per-user amplitudes `sqrt(rho_i)`, so a
//! forward difference in `sqrt(rho_i)` recovers the integer coefficient of
//! user `i` in every distance. This path works purely on floating-point
//! level positions and serves as an independent check of the symbolic
//! extraction.

use nalgebra::DMatrix;

use super::terms::error_intervals;
use super::{build_superimposed, ConstellationSpec};
use crate::error::{Error, Result};

fn distances(spec: &ConstellationSpec, user: usize) -> Vec<f64> {
    let nb = spec.bits[user] as usize / 2;
    let mut out = Vec::new();
    for bit in 0..nb {
        for r in 0..spec.levels.len() {
            let v = spec.levels[r].value;
            let thr = &spec.threshold_values;
            for (lo, hi) in error_intervals(spec, user, bit, r) {
                match (lo, hi) {
                    (None, Some(h)) => out.push(v - thr[h]),
                    (Some(l), None) => out.push(thr[l] - v),
                    (Some(l), Some(h)) => {
                        out.push(thr[l] - v);
                        out.push(thr[h] - v);
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
    }
    out
}

fn order(spec: &ConstellationSpec) -> Vec<Vec<usize>> {
    spec.levels.iter().map(|l| l.indices.clone()).collect()
}

/// Numeric error distances of every user, in the same order as the unmerged
/// symbolic terms (bit, then column, then boundary).
pub fn error_distances(bits: &[u32], rho: &[f64]) -> Result<Vec<Vec<f64>>> {
    let w: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let spec = build_superimposed(bits, &w)?;
    Ok((0..bits.len()).map(|k| distances(&spec, k)).collect())
}

/// Matrices `A_k` with `A_k[(q, i)] = d Delta_{k,q} / d sqrt(rho_i)`,
/// estimated by perturbing `sqrt(rho_i)` by `epsilon`.
///
/// Fails with [`Error::OrderingChanged`] when the perturbation reorders the
/// constellation; retry with a smaller `epsilon`.
pub fn algorithm1_coefficients(bits: &[u32], rho: &[f64], epsilon: f64) -> Result<Vec<DMatrix<f64>>> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain("epsilon must be positive".into()));
    }
    let base_w: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let base = build_superimposed(bits, &base_w)?;
    let base_order = order(&base);
    let k_users = bits.len();

    let mut perturbed = Vec::with_capacity(k_users);
    for i in 0..k_users {
        let mut w = base_w.clone();
        w[i] += epsilon;
        let spec = build_superimposed(bits, &w).map_err(|_| Error::OrderingChanged { epsilon })?;
        if order(&spec) != base_order {
            return Err(Error::OrderingChanged { epsilon });
        }
        perturbed.push(spec);
    }

    (0..k_users)
        .map(|k| {
            let d1 = distances(&base, k);
            let mut a = DMatrix::zeros(d1.len(), k_users);
            for (i, spec) in perturbed.iter().enumerate() {
                let d2 = distances(spec, k);
                if d2.len() != d1.len() {
                    return Err(Error::OrderingChanged { epsilon });
                }
                for q in 0..d1.len() {
                    a[(q, i)] = (d2[q] - d1[q]) / epsilon;
                }
            }
            Ok(a)
        })
        .collect()
}
