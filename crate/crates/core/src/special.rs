//! Gaussian tail function.

use std::f64::consts::SQRT_2;

/// Gaussian Q-function, `Q(x) = P(N(0,1) > x)`.
///
/// Evaluated through `erfc` so that the upper tail keeps full relative
/// precision.
#[inline]
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}
