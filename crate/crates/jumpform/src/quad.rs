//! Gauss-Legendre quadrature and the composite panel scheme used for the
//! semi-infinite time integrals. Panels start at width `τ = 1/(2·gap)` and
//! double, and truncation stops once an exact spectral tail bound drops
//! below the requested relative tolerance.

use crate::{Error, Result};

/// Nodes and weights of the `order`-point Gauss-Legendre rule on `[-1, 1]`.
/// Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates a scalar function over `[a, b]` with a single `order`-point
/// Gauss-Legendre rule.
pub fn integrate_scalar(f: &dyn Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * half * f(mid + half * x))
        .sum()
}

/// Integrates a scalar function over `[a, b]` by adaptive bisection: a
/// panel is accepted when its Gauss-Legendre value agrees with the sum over
/// its halves within the panel's share of `abs_tol`. Handles integrands
/// with isolated kinks (e.g. absolute-value crossings) that defeat fixed
/// panels.
pub fn integrate_adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    order: usize,
) -> f64 {
    let (nodes, weights) = gauss_legendre(order);
    let panel = |lo: f64, hi: f64| -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (lo + hi);
        nodes
            .iter()
            .zip(&weights)
            .map(|(&x, &w)| w * half * f(mid + half * x))
            .sum()
    };
    fn refine(
        panel: &dyn Fn(f64, f64) -> f64,
        lo: f64,
        hi: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let mid = 0.5 * (lo + hi);
        let left = panel(lo, mid);
        let right = panel(mid, hi);
        if depth == 0 || (whole - left - right).abs() <= tol {
            return left + right;
        }
        refine(panel, lo, mid, left, 0.5 * tol, depth - 1)
            + refine(panel, mid, hi, right, 0.5 * tol, depth - 1)
    }
    refine(&panel, a, b, panel(a, b), abs_tol, 48)
}

/// Quadrature controls for the semi-infinite time integrals.
#[derive(Debug, Clone)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    /// Gauss-Legendre nodes per panel.
    pub panel_order: usize,
    pub max_panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            panel_order: 32,
            max_panels: 64,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return Err(Error::BadConfig(format!(
                "rel_tol {} outside (0, 1e-2]",
                self.rel_tol
            )));
        }
        if self.panel_order < 4 {
            return Err(Error::BadConfig(format!(
                "panel_order {} < 4",
                self.panel_order
            )));
        }
        Ok(())
    }
}

/// Outcome of a panelled semi-infinite vector integral.
#[derive(Debug, Clone)]
pub struct PanelIntegral {
    pub values: Vec<f64>,
    /// Truncation time at which the tail bound was satisfied.
    pub t_cut: f64,
    /// Tail bound relative to the accumulated weighted total.
    pub achieved_rel_tol: f64,
}

/// Integrates a vector-valued integrand over `[0, ∞)` with doubling
/// Gauss-Legendre panels. `tail_bound(T)` must bound
/// `Σ_i weight_i · ∫_T^∞ integrand_i(t) dt` from above; integration stops
/// once it falls below `rel_tol` times the accumulated weighted total.
pub fn integrate_semi_infinite(
    integrand: &dyn Fn(f64) -> Vec<f64>,
    weights_m: &[f64],
    first_width: f64,
    tail_bound: &dyn Fn(f64) -> f64,
    config: &QuadratureConfig,
) -> Result<PanelIntegral> {
    config.validate()?;
    let (nodes, gl_weights) = gauss_legendre(config.panel_order);
    let dim = weights_m.len();
    let mut values = vec![0.0; dim];
    let mut t0 = 0.0;
    let mut width = first_width;
    let mut achieved = f64::INFINITY;
    for panel in 0..config.max_panels {
        let half = 0.5 * width;
        let mid = t0 + half;
        for (&x, &w) in nodes.iter().zip(&gl_weights) {
            let sample = integrand(mid + half * x);
            for i in 0..dim {
                values[i] += w * half * sample[i];
            }
        }
        t0 += width;
        if panel > 0 {
            width *= 2.0;
        }
        let total: f64 = values
            .iter()
            .zip(weights_m)
            .map(|(&v, &m)| v.abs() * m)
            .sum();
        let tail = tail_bound(t0);
        achieved = if total > 0.0 { tail / total } else { tail };
        if tail <= config.rel_tol * total.max(f64::MIN_POSITIVE) || tail == 0.0 {
            return Ok(PanelIntegral {
                values,
                t_cut: t0,
                achieved_rel_tol: achieved.max(0.0),
            });
        }
    }
    Err(Error::ToleranceNotMet {
        achieved,
        requested: config.rel_tol,
    })
}
