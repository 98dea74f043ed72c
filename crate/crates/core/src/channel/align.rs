use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Convergence threshold on `max |Im h_eff| / max |Re h_eff|`.
pub const ALIGN_TOL: f64 = 1e-10;
pub const ALIGN_MAX_ITERATIONS: usize = 100;
pub const ALIGN_MAX_HALVINGS: usize = 8;

/// Output of the alignment solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub alpha: Vec<f64>,
    pub h_eff: Vec<f64>,
    pub iterations: usize,
    /// `max_i |Im h_i| / max_i |Re h_i|` at the returned angles.
    pub residual: f64,
}

fn effective(gamma: &DMatrix<Complex64>, rot: &[Complex64]) -> Vec<Complex64> {
    (0..gamma.nrows())
        .map(|i| (0..gamma.ncols()).map(|j| gamma[(i, j)] * rot[j]).sum())
        .collect()
}

fn rotations(alpha: &[f64]) -> Vec<Complex64> {
    alpha.iter().map(|&a| Complex64::from_polar(1.0, a)).collect()
}

fn relative_residual(h: &[Complex64]) -> f64 {
    let im = h.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    let re = h.iter().fold(0.0f64, |m, v| m.max(v.re.abs()));
    if im == 0.0 {
        0.0
    } else {
        im / re
    }
}

fn imag_norm(h: &[Complex64]) -> f64 {
    h.iter().map(|v| v.im * v.im).sum::<f64>().sqrt()
}

/// Finds per-partition rotations `alpha` making every user's total channel
/// `sum_j gamma_ij e^{j alpha_j}` real.
///
/// Damped Newton from `alpha = 0` with Jacobian
/// `J_ij = Re(gamma_ij e^{j alpha_j})`; a step is halved (up to
/// [`ALIGN_MAX_HALVINGS`] times) while it fails to reduce the imaginary
/// residual.
pub fn align_channels(gamma: &DMatrix<Complex64>) -> Result<Alignment> {
    let k = gamma.nrows();
    assert_eq!(k, gamma.ncols(), "gamma must be square");
    let mut alpha = vec![0.0; k];
    let mut h = effective(gamma, &rotations(&alpha));
    let mut residual = relative_residual(&h);
    let mut iterations = 0;

    while residual > ALIGN_TOL {
        if iterations == ALIGN_MAX_ITERATIONS {
            return Err(Error::AlignmentFailed { residual });
        }
        iterations += 1;
        let rot = rotations(&alpha);
        let jac = DMatrix::from_fn(k, k, |i, j| (gamma[(i, j)] * rot[j]).re);
        let f = DVector::from_iterator(k, h.iter().map(|v| -v.im));
        let step = jac
            .lu()
            .solve(&f)
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .ok_or(Error::AlignmentFailed { residual })?;

        let current = imag_norm(&h);
        let mut t = 1.0;
        let mut trial_alpha: Vec<f64>;
        let mut trial_h: Vec<Complex64>;
        let mut halvings = 0;
        loop {
            trial_alpha = alpha.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            trial_h = effective(gamma, &rotations(&trial_alpha));
            if imag_norm(&trial_h) < current || halvings == ALIGN_MAX_HALVINGS {
                break;
            }
            t *= 0.5;
            halvings += 1;
        }
        alpha = trial_alpha;
        h = trial_h;
        residual = relative_residual(&h);
    }

    Ok(Alignment {
        alpha,
        h_eff: h.iter().map(|v| v.re).collect(),
        iterations,
        residual,
    })
}
