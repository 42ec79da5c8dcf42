//! Gamma and beta kernels.
//!
//! Every closed form in this crate is a ratio of gamma functions, so all of
//! them are assembled in log space from [`log_gamma`] and exponentiated once.

use serde::Serialize;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;

// g = 7, n = 9 coefficient set.
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_78;

/// Natural logarithm of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_positive(x))
}

fn ln_gamma_positive(x: f64) -> f64 {
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x keeps the series argument away from zero.
        return ln_gamma_positive(x + 1.0) - x.ln();
    }
    let z = x - 1.0;
    let mut series = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + series.ln()
}

/// Γ(x) for moderate positive arguments.
pub fn gamma(x: f64) -> Result<f64> {
    log_gamma(x).map(f64::exp)
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b).
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    Ok(log_gamma(a)? + log_gamma(b)? - log_gamma(a + b)?)
}

/// The reduction constant `C_N = 2π^{(N−1)/2} / Γ((N−1)/2)`, i.e. the
/// area of the equatorial sphere `S^{N−2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceConstant {
    pub ambient_dim: usize,
    pub value: f64,
}

pub fn surface_constant(ambient_dim: usize) -> Result<SurfaceConstant> {
    if ambient_dim < 2 {
        return Err(Error::InvalidInput(format!(
            "surface constant needs ambient dimension >= 2, got {ambient_dim}"
        )));
    }
    let half = (ambient_dim as f64 - 1.0) / 2.0;
    let value =
        (std::f64::consts::LN_2 + half * std::f64::consts::PI.ln() - log_gamma(half)?).exp();
    Ok(SurfaceConstant { ambient_dim, value })
}

/// Area of the unit sphere `S^{N−1} ⊂ R^N`, `2π^{N/2}/Γ(N/2)`.
pub fn sphere_area(ambient_dim: usize) -> Result<f64> {
    surface_constant(ambient_dim + 1).map(|c| c.value)
}

/// `∫₀¹ tᵃ (1 − t²)ᵇ dt = Γ((a+1)/2) Γ(b+1) / (2 Γ((a+1)/2 + b + 1))`.
pub fn half_moment_closed(a: f64, b: f64) -> Result<f64> {
    if !(a > -1.0) || !(b > -1.0) {
        return Err(Error::Domain(format!(
            "half moment needs a > -1 and b > -1, got a = {a}, b = {b}"
        )));
    }
    let h = (a + 1.0) / 2.0;
    Ok(0.5 * log_beta(h, b + 1.0)?.exp())
}

/// Binomial coefficient as a float; exact for the small arguments used here.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
