//! Unconditional BER by characteristic-function inversion.
//!
//! Each Q-term argument `X = sum_i a_i h_i` is rearranged into independent
//! pieces: one Gamma-modelled optimized component per user, and one
//! Erlang-difference component per RIS partition collecting every other
//! user's reflection off that partition (they share the partition's BS-side
//! channel). With `Phi` the CF of `X`,
//!
//! `E[Q(X / sigma)] = 1/2 + (1/pi) int_0^inf Re(j e^{-z^2/2} Phi(z/sigma) / z) dz`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::channel::{ChannelStats, SystemConfig};
use crate::constellation::{extract_ber_terms, BerExpression, QTerm};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

/// Upper integration limit; `e^{-z^2/2} < 1e-16` beyond it and `|Phi| <= 1`.
pub const Z_MAX: f64 = 9.0;

/// Characteristic function of one Q-term argument.
#[derive(Debug, Clone, PartialEq)]
pub struct TermCf {
    /// `(a_i zeta_i, N_i)` per user with `a_i != 0`.
    pub gamma_factors: Vec<(f64, f64)>,
    /// `(kappa_i, L_i)` per partition with `kappa_i > 0`.
    pub erlang_factors: Vec<(f64, usize)>,
}

impl TermCf {
    pub fn eval(&self, z: f64) -> Complex64 {
        let mut log = Complex64::new(0.0, 0.0);
        for &(scale, shape) in &self.gamma_factors {
            log -= shape * Complex64::new(1.0, -scale * z).ln();
        }
        for &(kappa, l) in &self.erlang_factors {
            log -= l as f64 * (0.25 * kappa * z * z).ln_1p();
        }
        log.exp()
    }

    /// Mean of the argument, `-i Phi'(0)`.
    pub fn mean(&self) -> f64 {
        self.gamma_factors.iter().map(|&(s, n)| s * n).sum()
    }

    /// Variance of the argument, `-Phi''(0) - mean^2`.
    pub fn variance(&self) -> f64 {
        let g: f64 = self.gamma_factors.iter().map(|&(s, n)| s * s * n).sum();
        let e: f64 = self.erlang_factors.iter().map(|&(k, l)| 0.5 * k * l as f64).sum();
        g + e
    }
}

/// Builds the CF of `sum_i a_i h_i` under the Gamma / Erlang-difference
/// channel model with `h_i ~ gamma_ii + sum_{j != i} Re gamma_ij`.
///
/// Partition `i` collects `kappa_i = sum_{j != i} (a_j s_j)^2` with
/// `s_j = sqrt(P_j eta_j / beta_j)`.
pub fn assemble_cf(a: &[i64], stats: &ChannelStats) -> TermCf {
    let k = a.len();
    let tilde: Vec<f64> = a
        .iter()
        .zip(&stats.scale_factor)
        .map(|(&ai, &s)| ai as f64 * s)
        .collect();
    let gamma_factors = (0..k)
        .filter(|&i| a[i] != 0)
        .map(|i| (a[i] as f64 * stats.zeta[i], stats.shape[i]))
        .collect();
    let erlang_factors = (0..k)
        .filter_map(|i| {
            let kappa: f64 = (0..k).filter(|&j| j != i).map(|j| tilde[j] * tilde[j]).sum();
            (kappa > 0.0).then_some((kappa, stats.erlang_shape[i]))
        })
        .collect();
    TermCf {
        gamma_factors,
        erlang_factors,
    }
}

/// The inversion integrand `Re(j e^{-z^2/2} Phi(z/sigma) / z)`, with its
/// removable singularity at the origin filled by `-mean / sigma`.
pub fn integrand(cf: &TermCf, sigma_n: f64, z: f64) -> f64 {
    if z < 1e-12 {
        return -cf.mean() / sigma_n;
    }
    -(-0.5 * z * z).exp() * cf.eval(z / sigma_n).im / z
}

fn quad_options(abs_tol: f64) -> QuadOptions {
    QuadOptions {
        abs_tol,
        max_intervals: 4000,
        initial_pieces: 8,
    }
}

/// `E[Q(X / sigma_n)]` for `X` with characteristic function `cf`.
pub fn expected_q(cf: &TermCf, sigma_n: f64) -> Result<f64> {
    expected_q_with_tol(cf, sigma_n, 1e-12)
}

pub fn expected_q_with_tol(cf: &TermCf, sigma_n: f64, abs_tol: f64) -> Result<f64> {
    if !(sigma_n > 0.0) {
        return Err(Error::Domain(format!("noise deviation must be positive (got {sigma_n})")));
    }
    if cf.gamma_factors.is_empty() {
        // symmetric argument: the integrand vanishes identically
        return Ok(0.5);
    }
    let r = integrate(|z| integrand(cf, sigma_n, z), 0.0, Z_MAX, quad_options(abs_tol))?;
    Ok(0.5 + r.value / PI)
}

/// Average BER of one user from its conditional expression.
pub fn ber_user(expr: &BerExpression, stats: &ChannelStats, sigma_n: f64) -> Result<f64> {
    let raw = ber_user_raw(&expr.terms, stats, sigma_n)?;
    if !(-1e-9..=1.0 + 1e-9).contains(&raw) {
        return Err(Error::BerOutOfRange {
            user: expr.user,
            value: raw,
        });
    }
    Ok(raw.clamp(0.0, 1.0))
}

pub(crate) fn ber_user_raw(terms: &[QTerm], stats: &ChannelStats, sigma_n: f64) -> Result<f64> {
    terms.iter().try_fold(0.0, |acc, t| {
        let c = *t.c.numer() as f64 / *t.c.denom() as f64;
        Ok(acc + c * expected_q(&assemble_cf(&t.a, stats), sigma_n)?)
    })
}

/// Conditional expressions of a scenario, reusable across power settings.
#[derive(Debug, Clone)]
pub struct BerModel {
    pub cfg: SystemConfig,
    pub expressions: Vec<BerExpression>,
}

impl BerModel {
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(BerModel {
            cfg: cfg.clone(),
            expressions: extract_ber_terms(&cfg.bits)?,
        })
    }

    /// Average BER of every user at the configured powers.
    pub fn ber(&self) -> Result<Vec<f64>> {
        self.ber_at(&self.cfg.powers_db)
    }

    /// Average BER of every user at `powers_db`.
    pub fn ber_at(&self, powers_db: &[f64]) -> Result<Vec<f64>> {
        let cfg = self.cfg.with_powers(powers_db);
        let stats = ChannelStats::from_config(&cfg)?;
        let sigma_n = cfg.sigma_n();
        self.expressions
            .iter()
            .map(|e| ber_user(e, &stats, sigma_n))
            .collect()
    }
}
