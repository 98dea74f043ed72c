//! Oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

pub mod golden;

use rand::Rng;
use risnoma::constellation::gray;
use risnoma::special::q_function;

pub const BIT_SETS: [&[u32]; 5] = [&[2, 2], &[4, 2], &[4, 4], &[2, 2, 2], &[4, 2, 2]];

/// Every combination of per-user PAM indices, as (indices, amplitudes).
pub fn combos(bits: &[u32]) -> Vec<(Vec<usize>, Vec<f64>)> {
    let radix: Vec<usize> = bits.iter().map(|&b| 1usize << (b / 2)).collect();
    let total: usize = radix.iter().product();
    (0..total)
        .map(|mut code| {
            let mut idx = vec![0; bits.len()];
            for k in (0..bits.len()).rev() {
                idx[k] = code % radix[k];
                code /= radix[k];
            }
            let amp = idx
                .iter()
                .zip(&radix)
                .map(|(&i, &m)| (2 * i) as f64 - (m - 1) as f64)
                .collect();
            (idx, amp)
        })
        .collect()
}

pub fn design_weights(bits: &[u32]) -> Vec<f64> {
    (0..bits.len())
        .map(|i| 2f64.powi((bits[i + 1..].iter().sum::<u32>() / 2) as i32))
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-bit error probability of each user: the level order is fixed by the
/// design weights, decision boundaries are midpoints at `h`, and every
/// (transmitted, decided) pair contributes its Gaussian region mass times
/// the Hamming distance of the labels.
pub fn region_oracle(bits: &[u32], h: &[f64], sigma: f64) -> Vec<f64> {
    let w = design_weights(bits);
    let mut all = combos(bits);
    all.sort_by(|a, b| dot(&a.1, &w).total_cmp(&dot(&b.1, &w)));
    let pos: Vec<f64> = all.iter().map(|c| dot(&c.1, h)).collect();
    let thr: Vec<f64> = pos.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    let n = all.len();
    let mut ber = vec![0.0; bits.len()];
    for (tx, x) in all.iter().zip(&pos) {
        for (rx, det) in all.iter().enumerate() {
            let lo = if rx == 0 { 0.0 } else { q_function((thr[rx - 1] - x) / sigma) };
            let lo = if rx == 0 { 1.0 } else { lo };
            let hi = if rx == n - 1 { 0.0 } else { q_function((thr[rx] - x) / sigma) };
            let mass = lo - hi;
            for k in 0..bits.len() {
                let d = (gray(tx.0[k] as u32) ^ gray(det.0[k] as u32)).count_ones();
                ber[k] += mass * d as f64;
            }
        }
    }
    for k in 0..bits.len() {
        ber[k] /= n as f64 * (bits[k] / 2) as f64;
    }
    ber
}

/// Random gains whose level order matches the design order.
pub fn ordered_h<R: Rng>(bits: &[u32], rng: &mut R) -> Vec<f64> {
    let w = design_weights(bits);
    let mut all = combos(bits);
    all.sort_by(|a, b| dot(&a.1, &w).total_cmp(&dot(&b.1, &w)));
    loop {
        let h: Vec<f64> = w.iter().map(|wi| wi * rng.random_range(0.6..1.4)).collect();
        let pos: Vec<f64> = all.iter().map(|c| dot(&c.1, &h)).collect();
        if pos.windows(2).all(|p| p[1] > p[0]) {
            let scale = rng.random_range(0.5..3.0);
            return h.iter().map(|x| x * scale).collect();
        }
    }
}


/// Largest deviation between the finite-difference coefficient matrices and
/// the unmerged symbolic rows.
pub fn finite_difference_gap(bits: &[u32], eps: f64) -> f64 {
    use risnoma::constellation::{algorithm1_coefficients, canonical, column_terms, default_rho};
    let spec = canonical(bits).unwrap();
    let mats = algorithm1_coefficients(bits, &default_rho(bits), eps).unwrap();
    let mut worst = 0.0f64;
    for (k, a) in mats.iter().enumerate() {
        let rows: Vec<Vec<i64>> = (0..bits[k] as usize / 2)
            .flat_map(|bit| column_terms(&spec, k, bit))
            .flat_map(|c| c.terms)
            .map(|t| t.a)
            .collect();
        if a.nrows() != rows.len() {
            return f64::INFINITY;
        }
        for (q, row) in rows.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                worst = worst.max((a[(q, i)] - v as f64).abs());
            }
        }
    }
    worst
}

/// A random Q-term argument: integer row `a`, per-user scale `s`, reflector
/// counts `l` and noise deviation `sigma`.
#[derive(Debug, Clone)]
pub struct TermCase {
    pub a: Vec<i64>,
    pub s: Vec<f64>,
    pub l: Vec<usize>,
    pub sigma: f64,
}

impl TermCase {
    pub fn random<R: Rng>(rng: &mut R) -> TermCase {
        let k = rng.random_range(1..=3);
        let mut a: Vec<i64> = (0..k).map(|_| rng.random_range(-3..=3)).collect();
        if a.iter().all(|&x| x == 0) {
            a[0] = 1;
        }
        let s: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let l: Vec<usize> = (0..k).map(|_| rng.random_range(1..=12)).collect();
        // put the mean a few noise deviations from zero
        let mean: f64 = (0..k)
            .map(|i| a[i] as f64 * s[i] * std::f64::consts::PI / 4.0 * l[i] as f64)
            .sum();
        let sigma = (mean.abs() / rng.random_range(0.3..2.5)).max(0.2);
        TermCase { a, s, l, sigma }
    }

    pub fn stats(&self) -> risnoma::channel::ChannelStats {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        risnoma::channel::ChannelStats {
            zeta: self.s.iter().map(|s| s * (16.0 - pi2) / (4.0 * std::f64::consts::PI)).collect(),
            shape: self.l.iter().map(|&l| l as f64 * pi2 / (16.0 - pi2)).collect(),
            erlang_shape: self.l.clone(),
            scale_factor: self.s.clone(),
        }
    }
}

/// Builds the argument sample by sample: each user's own component is a
/// moment-matched Gamma variate, and partition `i` adds
/// `Re(sum_l g_l sum_{j != i} a_j s_j h_jl)` with every `g_l`, `h_jl` a unit
/// complex Gaussian. Returns the mean of `Q(X / sigma)` and its standard
/// error.
pub fn constructive_expected_q(case: &TermCase, samples: usize, seed: u64) -> (f64, f64) {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, StandardNormal};
    use rayon::prelude::*;

    let stats = case.stats();
    let k = case.a.len();
    let chunks = 64;
    let per = samples / chunks;
    let (s1, s2) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let gammas: Vec<Gamma<f64>> =
                (0..k).map(|i| Gamma::new(stats.shape[i], stats.zeta[i]).unwrap()).collect();
            let cn = |rng: &mut ChaCha8Rng| -> (f64, f64) {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                (re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
            };
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..per {
                let mut x = 0.0;
                for i in 0..k {
                    x += case.a[i] as f64 * gammas[i].sample(&mut rng);
                }
                for i in 0..k {
                    for _ in 0..case.l[i] {
                        let g = cn(&mut rng);
                        let (mut re, mut im) = (0.0, 0.0);
                        for j in (0..k).filter(|&j| j != i) {
                            let h = cn(&mut rng);
                            let w = case.a[j] as f64 * case.s[j];
                            re += w * h.0;
                            im += w * h.1;
                        }
                        x += g.0 * re - g.1 * im;
                    }
                }
                let q = q_function(x / case.sigma);
                s1 += q;
                s2 += q * q;
            }
            (s1, s2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = (per * chunks) as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Exhaustive grid over `[lo, hi]^K` at `step` dB; points where the model
/// cannot be evaluated are skipped. Returns the best point and its cost.
pub fn grid_minimum(problem: &risnoma::pa::PaProblem, lo: f64, hi: f64, step: f64) -> (Vec<f64>, f64) {
    use rayon::prelude::*;
    let n = ((hi - lo) / step).round() as usize + 1;
    let k = problem.users();
    let total = n.pow(k as u32);
    (0..total)
        .into_par_iter()
        .filter_map(|mut code| {
            let mut p = vec![0.0; k];
            for x in p.iter_mut().rev() {
                *x = lo + step * (code % n) as f64;
                code /= n;
            }
            let cost = problem.cost(&p).ok()?;
            Some((p, cost))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

/// Draws `n` normalized realizations in parallel chunks and folds `f` over
/// them into a vector of running sums.
pub fn channel_sums<F>(reflectors: &[usize], n: usize, seed: u64, width: usize, f: F) -> Vec<f64>
where
    F: Fn(&nalgebra::DMatrix<num_complex::Complex64>, &mut [f64]) + Sync,
{
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rayon::prelude::*;
    use risnoma::channel::sample_normalized;

    let chunks = 50;
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut acc = vec![0.0; width];
            for _ in 0..n / chunks {
                let d = sample_normalized(reflectors, &mut rng, false);
                f(&d.gamma_hat, &mut acc);
            }
            acc
        })
        .reduce(
            || vec![0.0; width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}
