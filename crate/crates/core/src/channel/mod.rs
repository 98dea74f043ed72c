//! Cascaded user-RIS-BS channel model.
//!
//! Each user `i` owns a partition of `L_i` reflectors whose phases are
//! matched to its own cascaded channel. The matched part of the channel
//! (`gamma_ii`) is a scaled sum of Rayleigh products and is moment-matched to
//! a Gamma variable; the reflections of user `i` off the other partitions
//! (`gamma_ij`) have real parts distributed as a difference of two IID Erlang
//! variables.

mod align;
mod sampling;

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub use align::{align_channels, Alignment, ALIGN_MAX_HALVINGS, ALIGN_MAX_ITERATIONS, ALIGN_TOL};
pub use sampling::{sample_normalized, sample_realization, ChannelRealization, NormalizedDraw};

/// Scenario description shared by every analysis path.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Bits per QAM symbol of each user (even, square constellations).
    pub bits: Vec<u32>,
    /// Reflectors in each user's RIS partition.
    pub reflectors: Vec<usize>,
    /// User-to-RIS distances in meters.
    pub d_user_ris: Vec<f64>,
    /// RIS-to-BS distance in meters.
    pub d_ris_bs: f64,
    /// Path-loss exponent.
    pub psi: f64,
    /// Noise variance per real dimension.
    pub sigma_n2: f64,
    /// Transmit powers in dB.
    pub powers_db: Vec<f64>,
}

impl SystemConfig {
    pub fn users(&self) -> usize {
        self.bits.len()
    }

    pub fn total_reflectors(&self) -> usize {
        self.reflectors.iter().sum()
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n2.sqrt()
    }

    /// Copy of the configuration with different transmit powers.
    pub fn with_powers(&self, powers_db: &[f64]) -> SystemConfig {
        SystemConfig {
            powers_db: powers_db.to_vec(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.users();
        if k == 0 {
            return Err(Error::config("bits", "at least one user is required"));
        }
        for (name, len) in [
            ("reflectors", self.reflectors.len()),
            ("d_user_ris", self.d_user_ris.len()),
            ("powers_db", self.powers_db.len()),
        ] {
            if len != k {
                return Err(Error::config(
                    name,
                    format!("expected {k} entries (one per user), found {len}"),
                ));
            }
        }
        for (i, &b) in self.bits.iter().enumerate() {
            if b < 2 || b % 2 != 0 {
                return Err(Error::config(
                    "bits",
                    format!("user {}: {b} bits per symbol is not a square QAM order", i + 1),
                ));
            }
            if b > 30 {
                return Err(Error::config(
                    "bits",
                    format!("user {}: {b} bits per symbol is too large", i + 1),
                ));
            }
        }
        if let Some(i) = self.reflectors.iter().position(|&l| l == 0) {
            return Err(Error::config(
                "reflectors",
                format!("user {} has an empty RIS partition", i + 1),
            ));
        }
        if let Some(i) = self.d_user_ris.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::config(
                "d_user_ris",
                format!("user {}: distance must be positive", i + 1),
            ));
        }
        if !(self.d_ris_bs > 0.0 && self.d_ris_bs.is_finite()) {
            return Err(Error::config("d_ris_bs", "distance must be positive"));
        }
        if !(self.psi > 0.0 && self.psi.is_finite()) {
            return Err(Error::config("psi", "path-loss exponent must be positive"));
        }
        if !(self.sigma_n2 > 0.0 && self.sigma_n2.is_finite()) {
            return Err(Error::config("sigma_n2", "noise variance must be positive"));
        }
        if let Some(i) = self.powers_db.iter().position(|p| !p.is_finite()) {
            return Err(Error::config(
                "powers_db",
                format!("user {}: power must be finite", i + 1),
            ));
        }
        Ok(())
    }

    /// Per-user amplitude scale `sqrt(P_i eta_i / beta_i)`.
    pub fn scale_factors(&self) -> Result<Vec<f64>> {
        (0..self.users())
            .map(|i| {
                let beta = qam_scale(1u64 << self.bits[i])?;
                let eta = pathloss(self.d_user_ris[i], self.d_ris_bs, self.psi)?;
                Ok((db_to_linear(self.powers_db[i]) * eta / beta).sqrt())
            })
            .collect()
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Average-energy normalization of a square `M`-QAM alphabet with odd-integer
/// coordinates: `beta = 2 (M - 1) / 3`.
pub fn qam_scale(m: u64) -> Result<f64> {
    if m < 4 || !m.is_power_of_two() || m.trailing_zeros() % 2 != 0 {
        return Err(Error::InvalidModulation(format!(
            "{m}-QAM is not a square constellation of order >= 4"
        )));
    }
    Ok(2.0 * (m as f64 - 1.0) / 3.0)
}

/// Linear gain of the user-RIS-BS cascade, `(d_user_ris * d_ris_bs)^-psi`.
pub fn pathloss(d_user_ris: f64, d_ris_bs: f64, psi: f64) -> Result<f64> {
    if !(d_user_ris > 0.0) || !(d_ris_bs > 0.0) {
        return Err(Error::Domain(format!(
            "distances must be positive (got {d_user_ris}, {d_ris_bs})"
        )));
    }
    if !(psi > 0.0) {
        return Err(Error::Domain(format!("path-loss exponent must be positive (got {psi})")));
    }
    Ok((d_user_ris * d_ris_bs).powf(-psi))
}

/// Moment-matched Gamma `(scale, shape)` of the optimized channel component.
///
/// Mean `pi/4 * L * s` and variance `(16 - pi^2)/16 * L * s^2`, with
/// `s = sqrt(P eta / beta)`. The shape depends on `L` only.
pub fn gamma_params(reflectors: usize, power: f64, eta: f64, beta: f64) -> (f64, f64) {
    let s = (power * eta / beta).sqrt();
    gamma_params_scaled(reflectors, s)
}

pub(crate) fn gamma_params_scaled(reflectors: usize, s: f64) -> (f64, f64) {
    let pi2 = PI * PI;
    let zeta = s * (16.0 - pi2) / (4.0 * PI);
    let shape = reflectors as f64 * pi2 / (16.0 - pi2);
    (zeta, shape)
}

/// Characteristic function of a Gamma(shape, scale) variable,
/// `(1 - j scale z)^-shape`, on the principal branch.
pub fn cf_optimized(z: f64, zeta: f64, shape: f64) -> Complex64 {
    (-shape * Complex64::new(1.0, -zeta * z).ln()).exp()
}

/// Characteristic function of the real part of a cross component,
/// `(1 + scale^2 z^2 / 4)^-L`.
pub fn cf_cross_real(z: f64, reflectors: usize, scale: f64) -> f64 {
    (1.0 + 0.25 * scale * scale * z * z).powi(-(reflectors as i32))
}

/// Per-user statistics feeding the characteristic-function assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    /// Gamma scale of each user's optimized component.
    pub zeta: Vec<f64>,
    /// Gamma shape of each user's optimized component.
    pub shape: Vec<f64>,
    /// Erlang shape of each partition (its reflector count).
    pub erlang_shape: Vec<usize>,
    /// `sqrt(P_i eta_i / beta_i)` per user.
    pub scale_factor: Vec<f64>,
}

impl ChannelStats {
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let scale_factor = cfg.scale_factors()?;
        let (zeta, shape) = cfg
            .reflectors
            .iter()
            .zip(&scale_factor)
            .map(|(&l, &s)| gamma_params_scaled(l, s))
            .unzip();
        Ok(ChannelStats {
            zeta,
            shape,
            erlang_shape: cfg.reflectors.clone(),
            scale_factor,
        })
    }

    /// Mean of the optimized component of user `i`.
    pub fn mean(&self, i: usize) -> f64 {
        self.shape[i] * self.zeta[i]
    }

    /// Variance of the optimized component of user `i`.
    pub fn variance(&self, i: usize) -> f64 {
        self.shape[i] * self.zeta[i] * self.zeta[i]
    }
}
