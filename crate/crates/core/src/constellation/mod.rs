//! Superimposed per-dimension constellations of aligned uplink NOMA.
//!
//! After alignment every user's channel is real, so the in-phase and
//! quadrature rails carry independent, identical superimposed PAM
//! constellations. Levels are tracked symbolically as integer vectors of
//! per-user PAM amplitudes (odd integers), so decision thresholds and error
//! distances are exact integer combinations of the per-user channel gains.

mod finite_diff;
mod terms;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use finite_diff::{algorithm1_coefficients, error_distances};
pub use terms::{
    bit_expression, column_terms, conditional_ber, expressions_to_json, extract_ber_terms,
    BerExpression, ColumnTerms, QTerm, SignedRow,
};

/// Binary-reflected Gray code.
#[inline]
pub fn gray(index: u32) -> u32 {
    index ^ (index >> 1)
}

/// Per-dimension amplitude of PAM index `index` out of `m` levels.
#[inline]
pub fn pam_amplitude(index: usize, m: usize) -> i64 {
    2 * index as i64 - (m as i64 - 1)
}

/// Default power coefficients `rho_i = 2^(sum_{j>i} b_j)`, `rho_K = 1`.
pub fn default_rho(bits: &[u32]) -> Vec<f64> {
    (0..bits.len())
        .map(|i| 2f64.powi(bits[i + 1..].iter().sum::<u32>() as i32))
        .collect()
}

/// Exact integer amplitude weights `sqrt(rho_i)` of the canonical ordering.
pub(crate) fn canonical_weights(bits: &[u32]) -> Vec<i128> {
    (0..bits.len())
        .map(|i| 1i128 << (bits[i + 1..].iter().sum::<u32>() / 2))
        .collect()
}

fn check_bits(bits: &[u32]) -> Result<()> {
    if bits.is_empty() {
        return Err(Error::InvalidModulation("no users".into()));
    }
    for &b in bits {
        if b < 2 || b % 2 != 0 || b > 30 {
            return Err(Error::InvalidModulation(format!(
                "{b} bits per symbol is not a square QAM order"
            )));
        }
    }
    Ok(())
}

/// One level of the superimposed per-dimension constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// PAM index of each user (0 = most negative amplitude).
    pub indices: Vec<usize>,
    /// Odd-integer PAM amplitude of each user.
    pub coeffs: Vec<i64>,
    /// Per-user Gray label (MSB first, `b_i / 2` bits).
    pub labels: Vec<u32>,
    /// Numeric position at the construction weights.
    pub value: f64,
}

/// Sorted superimposed per-dimension constellation with midpoint thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationSpec {
    pub bits: Vec<u32>,
    pub weights: Vec<f64>,
    /// Levels in increasing order of `value`.
    pub levels: Vec<Level>,
    /// Symbolic midpoints between consecutive levels (integer vectors).
    pub thresholds: Vec<Vec<i64>>,
    /// Numeric midpoints at the construction weights.
    pub threshold_values: Vec<f64>,
}

impl ConstellationSpec {
    pub fn users(&self) -> usize {
        self.bits.len()
    }

    /// PAM levels per dimension of user `k`.
    pub fn levels_per_dim(&self, k: usize) -> usize {
        1 << (self.bits[k] / 2)
    }

    /// Per-dimension label bit `t` (0 = MSB) of user `k` at sorted level `r`.
    pub fn label_bit(&self, r: usize, k: usize, t: usize) -> u32 {
        let nb = self.bits[k] as usize / 2;
        (self.levels[r].labels[k] >> (nb - 1 - t)) & 1
    }

    /// Thresholds evaluated at real effective channels `h`.
    pub fn thresholds_at(&self, h: &[f64]) -> Vec<f64> {
        self.thresholds
            .iter()
            .map(|t| t.iter().zip(h).map(|(&a, &x)| a as f64 * x).sum())
            .collect()
    }

    /// Index of the decision region of `y`: the number of thresholds lying
    /// strictly below it, so a sample exactly on a threshold goes to the
    /// lower level.
    pub fn region(thresholds: &[f64], y: f64) -> usize {
        thresholds.iter().filter(|&&t| t < y).count()
    }
}

/// Enumerates every combination of per-user PAM levels, places it at
/// `sum_i s_i w_i`, sorts, and emits midpoint thresholds.
///
/// Fails if two combinations land on the same position.
pub fn build_superimposed(bits: &[u32], weights: &[f64]) -> Result<ConstellationSpec> {
    check_bits(bits)?;
    if weights.len() != bits.len() {
        return Err(Error::Domain(format!(
            "{} weights for {} users",
            weights.len(),
            bits.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Domain("weights must be positive".into()));
    }
    let radix: Vec<usize> = bits.iter().map(|&b| 1usize << (b / 2)).collect();
    let total: usize = radix.iter().product();
    let mut levels = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut indices = vec![0; bits.len()];
        for k in (0..bits.len()).rev() {
            indices[k] = code % radix[k];
            code /= radix[k];
        }
        let coeffs: Vec<i64> = indices
            .iter()
            .zip(&radix)
            .map(|(&i, &m)| pam_amplitude(i, m))
            .collect();
        let labels = indices.iter().map(|&i| gray(i as u32)).collect();
        let value = coeffs.iter().zip(weights).map(|(&c, &w)| c as f64 * w).sum();
        levels.push(Level {
            indices,
            coeffs,
            labels,
            value,
        });
    }
    levels.sort_by(|a, b| a.value.total_cmp(&b.value));

    let span = levels.last().map_or(1.0, |l| l.value.abs()).max(f64::MIN_POSITIVE);
    for pair in levels.windows(2) {
        if pair[1].value - pair[0].value <= 1e-12 * span {
            return Err(Error::DegenerateConstellation(format!(
                "levels {:?} and {:?} overlap at {}",
                pair[0].coeffs, pair[1].coeffs, pair[0].value
            )));
        }
    }
    let thresholds = levels
        .windows(2)
        .map(|p| {
            p[0].coeffs
                .iter()
                .zip(&p[1].coeffs)
                .map(|(a, b)| (a + b) / 2)
                .collect()
        })
        .collect();
    let threshold_values = levels
        .windows(2)
        .map(|p| 0.5 * (p[0].value + p[1].value))
        .collect();
    Ok(ConstellationSpec {
        bits: bits.to_vec(),
        weights: weights.to_vec(),
        levels,
        thresholds,
        threshold_values,
    })
}

/// The constellation in its design ordering, built at `sqrt(rho)` weights.
pub fn canonical(bits: &[u32]) -> Result<ConstellationSpec> {
    check_bits(bits)?;
    let w: Vec<f64> = default_rho(bits).iter().map(|r| r.sqrt()).collect();
    build_superimposed(bits, &w)
}

/// Joint threshold detection of one received sample.
///
/// Both rails are compared against the canonical thresholds evaluated at
/// `h_eff`; the decided region maps back to each user's Gray label. Returns,
/// per user, its `b_i` bits: in-phase bits first, MSB first.
pub fn detect(y: Complex64, h_eff: &[f64], spec: &ConstellationSpec) -> Vec<Vec<bool>> {
    let thr = spec.thresholds_at(h_eff);
    let ri = ConstellationSpec::region(&thr, y.re);
    let rq = ConstellationSpec::region(&thr, y.im);
    (0..spec.users())
        .map(|k| {
            let nb = spec.bits[k] as usize / 2;
            [ri, rq]
                .iter()
                .flat_map(|&r| (0..nb).map(move |t| spec.label_bit(r, k, t) == 1))
                .collect()
        })
        .collect()
}
