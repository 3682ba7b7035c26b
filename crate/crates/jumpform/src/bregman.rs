//! Bregman divergence `F_p`, the French power, and the tie-breaking weight
//! `χ`. `F_p(a,b) = |b|^p - |a|^p - p a^{<p-1>} (b-a)` is the second-order
//! Taylor remainder of `a ↦ |a|^p`, hence nonnegative for `p > 1`.

use crate::{Error, Result};

/// Exponent for the Bregman machinery; strictly inside `(1, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BregmanParams {
    p: f64,
}

impl BregmanParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::BadConfig(format!("p = {p} must lie in (1, inf)")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// French power `a^{<γ>} = |a|^γ sgn(a)`, with `0^{<0>} = 0`.
pub fn french_power(a: f64, gamma: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    a.abs().powf(gamma) * a.signum()
}

/// Bregman divergence `F_p(a, b)`.
pub fn bregman_f(params: BregmanParams, a: f64, b: f64) -> f64 {
    let p = params.p();
    b.abs().powf(p) - a.abs().powf(p) - p * french_power(a, p - 1.0) * (b - a)
}

/// Weight selecting the larger-magnitude endpoint: 1 if `|s| > |t|`,
/// 1/2 on ties, 0 otherwise. `chi(s,t) + chi(t,s) = 1`. Magnitudes within
/// relative 1e-12 count as tied, so that exact ties survive the rounding of
/// spectrally synthesized fields.
pub fn chi(s: f64, t: f64) -> f64 {
    let (a, b) = (s.abs(), t.abs());
    if (a - b).abs() <= 1e-12 * a.max(b) {
        0.5
    } else if a > b {
        1.0
    } else {
        0.0
    }
}

/// `F_p(a,b) / (|b-a|^2 (|a| ∨ |b|)^{p-2})`, the ratio behind the
/// comparability estimate. Undefined on the diagonal.
pub fn comparability_ratio(params: BregmanParams, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Err(Error::DegeneratePair);
    }
    let p = params.p();
    let denom = (b - a).powi(2) * a.abs().max(b.abs()).powf(p - 2.0);
    Ok(bregman_f(params, a, b) / denom)
}
