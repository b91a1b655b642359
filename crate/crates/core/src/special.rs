//! Special functions needed by the t-mixture E- and M-steps.

use crate::error::{Error, Result};

/// Shift target for the recurrences; the asymptotic series below is accurate
/// past 1e-12 from here on.
const ASYMPTOTIC_FROM: f64 = 6.0;

// B_{2k} / (2k) for k = 1..7
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

// B_{2k} for k = 1..7
const TRIGAMMA_SERIES: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// Digamma function ψ(x) = d/dx ln Γ(x) for x > 0.
///
/// Upward recurrence ψ(x) = ψ(x + 1) − 1/x until x ≥ 6, then the
/// Bernoulli asymptotic expansion.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Usage(format!("digamma domain is x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut poly = 0.0;
    for c in DIGAMMA_SERIES.iter().rev() {
        poly = poly * inv2 + c;
    }
    acc + x.ln() - 0.5 / x - poly * inv2
}

/// Trigamma function ψ′(x) for x > 0.
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Usage(format!("trigamma domain is x > 0, got {x}")));
    }
    Ok(trigamma_unchecked(x))
}

pub(crate) fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut poly = 0.0;
    for c in TRIGAMMA_SERIES.iter().rev() {
        poly = poly * inv2 + c;
    }
    acc + inv + 0.5 * inv2 + poly * inv2 * inv
}

/// Natural log of the gamma function.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}
