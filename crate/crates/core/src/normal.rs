//! Standard normal distribution function.
//!
//! `Φ(x) = erfc(-x/√2) / 2`, with `erfc` from `libm` (a port of the musl/FreeBSD
//! implementation, error below 1 ulp over the whole real line). Using `erfc`
//! rather than `1 + erf` keeps full relative accuracy in the lower tail,
//! where the misestimate bounds live (values down to 1e-300 and below).

use std::f64::consts::FRAC_1_SQRT_2;

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate for large positive `x`.
pub fn phi_upper(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}
