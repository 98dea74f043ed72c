use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_1_SQRT_2;

use super::{align_channels, SystemConfig};
use crate::error::Result;

/// One draw of every cascaded channel at unit amplitude scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDraw {
    /// `gamma_hat[(i, j)] = sum_l h_ij,l e^{j theta_j,l} g_j,l`; the
    /// diagonal is real and nonnegative.
    pub gamma_hat: DMatrix<Complex64>,
    /// Per user, `sum_j sum_l |h_ij,l| |g_j,l|`: the gain when every
    /// reflector of the panel is phase-matched to that user. Only filled
    /// when requested.
    pub full_panel: Option<Vec<f64>>,
}

/// A realization of the scaled channel components after alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Scaled components, row `i` = user, column `j` = partition.
    pub gamma: DMatrix<Complex64>,
    /// Per-partition control angles (radians).
    pub alpha: Vec<f64>,
    /// Real effective channel of each user.
    pub h_eff: Vec<f64>,
}

#[inline]
fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Draws all `h_ij,l` and `g_j,l` as unit-variance circular Gaussians and sets
/// each partition's phases to match its owner's cascade.
///
/// Draw order per partition `j` and reflector `l`: `g_j,l`, `h_jj,l`, then
/// `h_ij,l` for the other users in ascending order.
pub fn sample_normalized<R: Rng + ?Sized>(
    reflectors: &[usize],
    rng: &mut R,
    with_full_panel: bool,
) -> NormalizedDraw {
    let k = reflectors.len();
    let mut gamma_hat = DMatrix::from_element(k, k, Complex64::new(0.0, 0.0));
    let mut full = with_full_panel.then(|| vec![0.0; k]);
    for (j, &len) in reflectors.iter().enumerate() {
        let mut own = 0.0;
        for _ in 0..len {
            let g = complex_normal(rng);
            let h_own = complex_normal(rng);
            let cascade = h_own * g;
            let mag = cascade.norm();
            own += mag;
            // e^{j theta} g with theta = -(arg h_jj + arg g)
            let g_rot = if mag > 0.0 { g * cascade.conj() / mag } else { g };
            let g_abs = g.norm();
            if let Some(full) = full.as_mut() {
                full[j] += mag;
            }
            for i in (0..k).filter(|&i| i != j) {
                let h = complex_normal(rng);
                gamma_hat[(i, j)] += h * g_rot;
                if let Some(full) = full.as_mut() {
                    full[i] += h.norm() * g_abs;
                }
            }
        }
        gamma_hat[(j, j)] = Complex64::new(own, 0.0);
    }
    NormalizedDraw {
        gamma_hat,
        full_panel: full,
    }
}

/// Draws one channel realization for `cfg` and aligns it.
pub fn sample_realization<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let scale = cfg.scale_factors()?;
    realize(&scale, &cfg.reflectors, rng)
}

pub(crate) fn realize<R: Rng + ?Sized>(
    scale: &[f64],
    reflectors: &[usize],
    rng: &mut R,
) -> Result<ChannelRealization> {
    let draw = sample_normalized(reflectors, rng, false);
    let mut gamma = draw.gamma_hat;
    for (i, mut row) in gamma.row_iter_mut().enumerate() {
        row *= Complex64::new(scale[i], 0.0);
    }
    let aligned = align_channels(&gamma)?;
    Ok(ChannelRealization {
        gamma,
        alpha: aligned.alpha,
        h_eff: aligned.h_eff,
    })
}
