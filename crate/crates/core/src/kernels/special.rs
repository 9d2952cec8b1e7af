//! Error function `F`, Gaussian densities and their distribution functions.

use std::f64::consts::PI;

use super::KernelError;

/// `F(z) = (1/(2√π)) ∫_z^∞ e^{-x²/4} dx` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErfF {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Evaluates `F`, `F'`, `F''`.
///
/// Substituting `x = 2u` turns the defining integral into
/// `π^{-1/2} ∫_{z/2}^∞ e^{-u²} du`, so `2F(z) = erfc(z/2)`. The derivatives
/// follow from differentiating under the integral sign.
pub fn erf_f(z: f64) -> ErfF {
    let e = (-z * z / 4.0).exp();
    let c = 1.0 / (2.0 * PI.sqrt());
    ErfF {
        value: 0.5 * libm::erfc(z / 2.0),
        d1: -c * e,
        d2: c * z / 2.0 * e,
    }
}

fn check_variance(r: f64) -> Result<(), KernelError> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(KernelError::NonPositiveVariance(r))
    }
}

/// Gaussian density `g_r(z) = (2πr)^{-1/2} e^{-z²/2r}`.
pub fn gauss(r: f64, z: f64) -> Result<f64, KernelError> {
    check_variance(r)?;
    Ok(gauss_unchecked(r, z))
}

/// Spatial derivative `g'_r(z) = -(z/r) g_r(z)`.
pub fn gauss_dz(r: f64, z: f64) -> Result<f64, KernelError> {
    check_variance(r)?;
    Ok(-(z / r) * gauss_unchecked(r, z))
}

/// `Φ_r(z) = ∫_{-∞}^z g_r`.
pub fn gauss_cdf(r: f64, z: f64) -> Result<f64, KernelError> {
    check_variance(r)?;
    Ok(0.5 * libm::erfc(-z / (2.0 * r).sqrt()))
}

/// `1 - Φ_r(z)`, accurate in the upper tail.
pub fn gauss_sf(r: f64, z: f64) -> Result<f64, KernelError> {
    check_variance(r)?;
    Ok(0.5 * libm::erfc(z / (2.0 * r).sqrt()))
}

/// `Φ_a(z) - Φ_b(z)` evaluated on whichever tail avoids cancellation.
pub fn cdf_difference(a: f64, b: f64, z: f64) -> Result<f64, KernelError> {
    if z > 0.0 {
        Ok(gauss_sf(b, z)? - gauss_sf(a, z)?)
    } else {
        Ok(gauss_cdf(a, z)? - gauss_cdf(b, z)?)
    }
}

pub(crate) fn gauss_unchecked(r: f64, z: f64) -> f64 {
    (-z * z / (2.0 * r)).exp() / (2.0 * PI * r).sqrt()
}

/// `sgn` with `sgn(0) = 0`.
pub fn sgn(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}
