use num_rational::Ratio;
use serde::Serialize;
use std::collections::BTreeMap;

use super::{canonical, canonical_weights, ConstellationSpec};
use crate::error::{Error, Result};
use crate::special::q_function;

/// `sign * Q(a . h / sigma)`, one boundary contribution of a single column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedRow {
    pub sign: i8,
    pub a: Vec<i64>,
}

/// Error-probability terms of one bit given one transmitted level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnTerms {
    /// Sorted level index (column, 0-based from the left).
    pub level: usize,
    pub coeffs: Vec<i64>,
    pub terms: Vec<SignedRow>,
}

/// `c * Q(sum_i a_i h_i / sigma)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTerm {
    pub c: Ratio<i64>,
    pub a: Vec<i64>,
}

/// Conditional BER of one user as a weighted sum of Q-functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BerExpression {
    /// 0-based user index.
    pub user: usize,
    pub bits: Vec<u32>,
    pub terms: Vec<QTerm>,
}

impl BerExpression {
    /// Number of Q-function terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn weight_sum(&self) -> Ratio<i64> {
        self.terms.iter().map(|t| t.c).sum()
    }
}

/// Maximal runs of decision regions whose label bit differs from that of
/// level `r`, as `(lower, upper)` threshold indices (`None` = unbounded).
pub(crate) fn error_intervals(
    spec: &ConstellationSpec,
    user: usize,
    bit: usize,
    r: usize,
) -> Vec<(Option<usize>, Option<usize>)> {
    let own = spec.label_bit(r, user, bit);
    let n = spec.levels.len();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for region in 0..=n {
        let wrong = region < n && spec.label_bit(region, user, bit) != own;
        match (wrong, start) {
            (true, None) => start = Some(region),
            (false, Some(s)) => {
                let lo = (s > 0).then(|| s - 1);
                let hi = (region < n).then_some(region - 1);
                out.push((lo, hi));
                start = None;
            }
            _ => {}
        }
    }
    out
}

fn sub(a: &[i64], b: &[i64]) -> Vec<i64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Unmerged terms of bit `bit` (0 = MSB of the in-phase rail) of `user`,
/// one entry per transmitted column.
///
/// A finite error interval `[lo, hi]` contributes `Q(lo - v) - Q(hi - v)`,
/// an upper half-line `Q(lo - v)` and a lower half-line `Q(v - hi)`.
pub fn column_terms(spec: &ConstellationSpec, user: usize, bit: usize) -> Vec<ColumnTerms> {
    (0..spec.levels.len())
        .map(|r| {
            let v = &spec.levels[r].coeffs;
            let mut terms = Vec::new();
            for (lo, hi) in error_intervals(spec, user, bit, r) {
                match (lo, hi) {
                    (None, Some(h)) => terms.push(SignedRow {
                        sign: 1,
                        a: sub(v, &spec.thresholds[h]),
                    }),
                    (Some(l), None) => terms.push(SignedRow {
                        sign: 1,
                        a: sub(&spec.thresholds[l], v),
                    }),
                    (Some(l), Some(h)) => {
                        terms.push(SignedRow {
                            sign: 1,
                            a: sub(&spec.thresholds[l], v),
                        });
                        terms.push(SignedRow {
                            sign: -1,
                            a: sub(&spec.thresholds[h], v),
                        });
                    }
                    (None, None) => unreachable!("error set cannot cover the whole line"),
                }
            }
            ColumnTerms {
                level: r,
                coeffs: v.clone(),
                terms,
            }
        })
        .collect()
}

/// Merges weighted Q-terms into canonical form: every row is oriented so the
/// distance is positive under the design ordering (via `Q(-x) = 1 - Q(x)`),
/// identical rows are summed and zero weights dropped.
pub(crate) fn canonicalize(
    bits: &[u32],
    raw: impl IntoIterator<Item = (Ratio<i64>, Vec<i64>)>,
) -> Vec<QTerm> {
    let w = canonical_weights(bits);
    let value = |a: &[i64]| -> i128 { a.iter().zip(&w).map(|(&x, &y)| x as i128 * y).sum() };
    let mut merged: BTreeMap<Vec<i64>, Ratio<i64>> = BTreeMap::new();
    let mut constant = Ratio::from_integer(0);
    for (c, a) in raw {
        let v = value(&a);
        if v > 0 {
            *merged.entry(a).or_default() += c;
        } else if v < 0 {
            constant += c;
            *merged.entry(a.iter().map(|x| -x).collect()).or_default() -= c;
        } else {
            debug_assert!(a.iter().all(|&x| x == 0), "nonzero row with zero design distance");
            constant += c / 2;
        }
    }
    let mut terms: Vec<QTerm> = merged
        .into_iter()
        .filter(|(_, c)| *c != Ratio::from_integer(0))
        .map(|(a, c)| QTerm { c, a })
        .collect();
    if constant != Ratio::from_integer(0) {
        // Q(0) = 1/2
        terms.push(QTerm {
            c: constant * 2,
            a: vec![0; bits.len()],
        });
    }
    terms.sort_by(|x, y| value(&x.a).cmp(&value(&y.a)).then_with(|| x.a.cmp(&y.a)));
    terms
}

fn check_user(bits: &[u32], user: usize) -> Result<()> {
    if user >= bits.len() {
        return Err(Error::Domain(format!("user {user} out of range for {} users", bits.len())));
    }
    Ok(())
}

/// Average error probability of one per-dimension bit of `user`.
pub fn bit_expression(bits: &[u32], user: usize, bit: usize) -> Result<BerExpression> {
    check_user(bits, user)?;
    if bit >= bits[user] as usize / 2 {
        return Err(Error::Domain(format!("user {user} has no per-dimension bit {bit}")));
    }
    let spec = canonical(bits)?;
    let weight = Ratio::new(1, spec.levels.len() as i64);
    let raw = column_terms(&spec, user, bit)
        .into_iter()
        .flat_map(|col| col.terms)
        .map(|t| (weight * t.sign as i64, t.a));
    Ok(BerExpression {
        user,
        bits: bits.to_vec(),
        terms: canonicalize(bits, raw),
    })
}

/// Conditional BER expression of every user.
///
/// Each user's bit errors are averaged over all columns and over its
/// per-dimension bits; the quadrature rail is identical to the in-phase one.
pub fn extract_ber_terms(bits: &[u32]) -> Result<Vec<BerExpression>> {
    let spec = canonical(bits)?;
    Ok((0..bits.len())
        .map(|user| {
            let nb = bits[user] as usize / 2;
            let weight = Ratio::new(1, (spec.levels.len() * nb) as i64);
            let raw: Vec<(Ratio<i64>, Vec<i64>)> = (0..nb)
                .flat_map(|bit| column_terms(&spec, user, bit))
                .flat_map(|col| col.terms)
                .map(|t| (weight * t.sign as i64, t.a))
                .collect();
            BerExpression {
                user,
                bits: bits.to_vec(),
                terms: canonicalize(bits, raw),
            }
        })
        .collect())
}

/// `sum_q c_q Q(a_q . h / sigma_n)`, unclamped.
pub fn conditional_ber(expr: &BerExpression, h_eff: &[f64], sigma_n: f64) -> f64 {
    expr.terms
        .iter()
        .map(|t| {
            let x: f64 = t.a.iter().zip(h_eff).map(|(&a, &h)| a as f64 * h).sum();
            (*t.c.numer() as f64 / *t.c.denom() as f64) * q_function(x / sigma_n)
        })
        .sum()
}

#[derive(Serialize)]
struct JsonTerm {
    c: String,
    a: Vec<i64>,
}

#[derive(Serialize)]
struct JsonUser {
    user: usize,
    terms: Vec<JsonTerm>,
}

#[derive(Serialize)]
struct JsonExport {
    bits: Vec<u32>,
    users: Vec<JsonUser>,
}

/// Text export: per user (1-based), a list of `{c: "p/q", a: [..]}`.
pub fn expressions_to_json(exprs: &[BerExpression]) -> String {
    let export = JsonExport {
        bits: exprs.first().map(|e| e.bits.clone()).unwrap_or_default(),
        users: exprs
            .iter()
            .map(|e| JsonUser {
                user: e.user + 1,
                terms: e
                    .terms
                    .iter()
                    .map(|t| JsonTerm {
                        c: format!("{}/{}", t.c.numer(), t.c.denom()),
                        a: t.a.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&export).expect("plain data serializes")
}
