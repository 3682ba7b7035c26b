//! Carré du champ operators and the four square functions.
//!
//! `Γ[u](i) = 1/2 Σ_j (u_j - u_i)^2 R_ij` and its χ-weighted variant
//! `Γ̃[u](i) = Σ_j (u_j - u_i)^2 χ(u_i, u_j) R_ij` feed the square functions
//!
//! ```text
//! G² (i) = ∫ Γ[P_t f](i) dt          G̃²(i) = ∫ Γ̃[P_t f](i) dt
//! H² (i) = ∫ P_t Γ[P_t f](i) dt      H̃²(i) = ∫ P_t Γ̃[P_t f](i) dt
//! ```
//!
//! Γ-based quantities admit closed-form spectral sums; χ-weighted ones are
//! integrated by the panel quadrature of `crate::quad` with an exact
//! spectral tail bound.

use crate::bregman::chi;
use crate::model::{Field, Generator, JumpKernel, StateSpace};
use crate::quad::{integrate_semi_infinite, QuadratureConfig};
use crate::spectral::{stationary_part, SpectralData};
use crate::{Error, Result};

/// `Γ[u]`.
pub fn carre_gamma(kernel: &JumpKernel, u: &[f64]) -> Result<Field> {
    let n = kernel.n();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let r = kernel.rate(i, j);
            if r > 0.0 {
                let d = u[j] - u[i];
                acc += d * d * r;
            }
        }
        out[i] = 0.5 * acc;
    }
    Ok(out)
}

/// `Γ̃[u]`, counting only jumps toward smaller magnitude (ties at weight 1/2).
pub fn carre_gamma_tilde(kernel: &JumpKernel, u: &[f64]) -> Result<Field> {
    let n = kernel.n();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let r = kernel.rate(i, j);
            if r > 0.0 {
                let d = u[j] - u[i];
                acc += d * d * chi(u[i], u[j]) * r;
            }
        }
        out[i] = acc;
    }
    Ok(out)
}

/// `Γ[u] = 1/2 A(u²) - u ⊙ Au`; valid without killing correction on
/// conservative generators only.
pub fn gamma_via_generator(gen: &Generator, u: &[f64]) -> Result<Field> {
    if !gen.conservative() {
        return Err(Error::NotConservative);
    }
    let u_sq: Vec<f64> = u.iter().map(|&v| v * v).collect();
    let a_usq = gen.apply(&u_sq)?;
    let a_u = gen.apply(u)?;
    Ok(u.iter()
        .zip(a_usq.iter().zip(&a_u))
        .map(|(&ui, (&aq, &au))| 0.5 * aq - ui * au)
        .collect())
}

/// Weighted p-norm `(Σ |g_i|^p m_i)^{1/p}`; `max |g_i|` for `p = ∞`.
pub fn weighted_p_norm(space: &StateSpace, g: &[f64], p: f64) -> Result<f64> {
    if g.len() != space.n() {
        return Err(Error::DimensionMismatch {
            expected: space.n(),
            got: g.len(),
        });
    }
    if p.is_nan() || p < 1.0 {
        return Err(Error::BadExponent { p });
    }
    if p.is_infinite() {
        return Ok(g.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())));
    }
    let sum: f64 = g
        .iter()
        .zip(space.m())
        .map(|(&v, &w)| v.abs().powf(p) * w)
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// Grid lower bound of `f*(x) = sup_t |P_t f(x)|`, including the `t → ∞`
/// value `|f̄|`.
pub fn maximal_function(spec: &SpectralData, f: &[f64], t_grid: &[f64]) -> Result<Field> {
    if !t_grid.iter().any(|&t| t == 0.0) {
        return Err(Error::GridTooCoarse);
    }
    let c = spec.coefficients(f)?;
    let bar = stationary_part(spec, f)?;
    let mut out: Vec<f64> = bar.iter().map(|&v| v.abs()).collect();
    for &t in t_grid {
        if t < 0.0 {
            return Err(Error::NegativeTime { t });
        }
        let p = spec.synthesize(&c, t);
        for (o, &v) in out.iter_mut().zip(&p) {
            *o = o.max(v.abs());
        }
    }
    Ok(out)
}

/// Spectral side data reused by all square-function evaluations: the
/// coefficients of `f - f̄` and the guard against zero-mode divergence.
struct Prepared {
    /// Coefficients of f on the full basis, zero modes zeroed out.
    coeffs: Vec<f64>,
    /// Full coefficients including zero modes (for χ weights).
    coeffs_full: Vec<f64>,
    /// Indices with positive eigenvalue and non-negligible coefficient.
    active: Vec<usize>,
}

fn prepare(
    spec: &SpectralData,
    kernel: &JumpKernel,
    f: &[f64],
) -> Result<Prepared> {
    let coeffs_full = spec.coefficients(f)?;
    let bar = stationary_part(spec, f)?;
    // Divergence guard: the stationary part must be constant across every
    // jump edge, otherwise Γ[P_t f] has a nonzero t → ∞ limit.
    let gamma_bar = carre_gamma(kernel, &bar)?;
    let scale = f.iter().fold(0.0f64, |a, &v| a.max(v.abs())).powi(2)
        * kernel.rates().iter().fold(0.0f64, |a, &v| a.max(v));
    if gamma_bar
        .iter()
        .any(|&v| v > 1e-20 * scale.max(1.0) + 1e-300)
    {
        return Err(Error::DivergentIntegral);
    }
    // Drop round-off-level coefficients: they are meaningless for the
    // integral but would eventually dominate P_t f and flip χ ties.
    let full_max = coeffs_full.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut coeffs_full = coeffs_full;
    for c in &mut coeffs_full {
        if c.abs() <= 1e-12 * full_max {
            *c = 0.0;
        }
    }
    let mut coeffs = coeffs_full.clone();
    for &k in spec.zero_modes() {
        coeffs[k] = 0.0;
    }
    let c_max = coeffs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let active: Vec<usize> = (0..spec.n())
        .filter(|&k| spec.lambdas()[k] > 0.0 && coeffs[k].abs() > 1e-14 * c_max)
        .collect();
    Ok(Prepared {
        coeffs,
        coeffs_full,
        active,
    })
}

/// `B_kl(i) = 1/2 Σ_j R_ij (φ_k(j) - φ_k(i)) (φ_l(j) - φ_l(i))` for all i.
fn cross_gamma(kernel: &JumpKernel, spec: &SpectralData, k: usize, l: usize) -> Field {
    let n = kernel.n();
    let basis = spec.basis();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let r = kernel.rate(i, j);
            if r > 0.0 {
                acc += r * (basis[(j, k)] - basis[(i, k)]) * (basis[(j, l)] - basis[(i, l)]);
            }
        }
        out[i] = 0.5 * acc;
    }
    out
}

/// Closed-form `G`: `G(i)² = Σ_{k,l} c_k c_l B_kl(i) / (λ_k + λ_l)` over
/// modes with positive eigenvalue.
pub fn square_g(
    spec: &SpectralData,
    kernel: &JumpKernel,
    f: &[f64],
) -> Result<Field> {
    let prep = prepare(spec, kernel, f)?;
    let n = spec.n();
    let mut sq = vec![0.0; n];
    for (a, &k) in prep.active.iter().enumerate() {
        for &l in &prep.active[a..] {
            let factor = if k == l { 1.0 } else { 2.0 };
            let weight =
                factor * prep.coeffs[k] * prep.coeffs[l] / (spec.lambdas()[k] + spec.lambdas()[l]);
            let b = cross_gamma(kernel, spec, k, l);
            for i in 0..n {
                sq[i] += weight * b[i];
            }
        }
    }
    Ok(sq.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

fn first_panel_width(spec: &SpectralData) -> f64 {
    let gap = spec.gap();
    if gap.is_finite() {
        0.5 / gap
    } else {
        1.0
    }
}

/// Exact norm-level tail `∫_T^∞ Σ_i m_i Γ[P_t f](i) dt = 1/2 Σ_k c_k² e^{-2 λ_k T}`.
fn spectral_tail(spec: &SpectralData, coeffs: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .filter(|&(k, _)| spec.lambdas()[k] > 0.0)
        .map(|(k, &c)| 0.5 * c * c * (-2.0 * spec.lambdas()[k] * t).exp())
        .sum()
}

fn integrate_square(
    spec: &SpectralData,
    space: &StateSpace,
    prep: &Prepared,
    integrand: &dyn Fn(f64) -> Vec<f64>,
    config: &QuadratureConfig,
) -> Result<(Field, f64, f64)> {
    if prep.active.is_empty() {
        return Ok((vec![0.0; spec.n()], 0.0, 0.0));
    }
    let out = integrate_semi_infinite(
        integrand,
        space.m(),
        first_panel_width(spec),
        &|t| spectral_tail(spec, &prep.coeffs, t),
        config,
    )?;
    Ok((
        out.values.into_iter().map(|v| v.max(0.0).sqrt()).collect(),
        out.achieved_rel_tol,
        out.t_cut,
    ))
}

/// Quadrature evaluation of `G` (independent cross-check of [`square_g`]).
pub fn square_g_quad(
    spec: &SpectralData,
    kernel: &JumpKernel,
    space: &StateSpace,
    f: &[f64],
    config: &QuadratureConfig,
) -> Result<Field> {
    let prep = prepare(spec, kernel, f)?;
    let (vals, _, _) = integrate_square(
        spec,
        space,
        &prep,
        &|t| carre_gamma(kernel, &spec.synthesize(&prep.coeffs_full, t)).expect("dims fixed"),
        config,
    )?;
    Ok(vals)
}

/// True when `P_t f` is a pure decaying eigenflow `e^{-λ t} f`, which makes
/// the χ weight time-independent.
fn eigenflow_lambda(spec: &SpectralData, prep: &Prepared) -> Option<f64> {
    let zero_part: f64 = spec
        .zero_modes()
        .iter()
        .map(|&k| prep.coeffs_full[k].abs())
        .sum();
    let c_max = prep.coeffs.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if zero_part > 1e-13 * c_max.max(1.0) {
        return None;
    }
    let mut lambda = None;
    for &k in &prep.active {
        let lk = spec.lambdas()[k];
        match lambda {
            None => lambda = Some(lk),
            Some(l0) if (lk - l0).abs() <= 1e-12 * l0 => {}
            _ => return None,
        }
    }
    lambda
}

/// `G̃`: closed form `Γ̃[f](i) / (2λ)` when `f` is a decaying eigenflow,
/// panel quadrature otherwise.
pub fn square_g_tilde(
    spec: &SpectralData,
    kernel: &JumpKernel,
    space: &StateSpace,
    f: &[f64],
    config: &QuadratureConfig,
) -> Result<Field> {
    let prep = prepare(spec, kernel, f)?;
    if let Some(lambda) = eigenflow_lambda(spec, &prep) {
        let g = carre_gamma_tilde(kernel, f)?;
        return Ok(g.into_iter().map(|v| (v / (2.0 * lambda)).sqrt()).collect());
    }
    let (vals, _, _) = integrate_square(
        spec,
        space,
        &prep,
        &|t| carre_gamma_tilde(kernel, &spec.synthesize(&prep.coeffs_full, t)).expect("dims fixed"),
        config,
    )?;
    Ok(vals)
}

/// Pure quadrature `G̃` (cross-check path).
pub fn square_g_tilde_quad(
    spec: &SpectralData,
    kernel: &JumpKernel,
    space: &StateSpace,
    f: &[f64],
    config: &QuadratureConfig,
) -> Result<Field> {
    let prep = prepare(spec, kernel, f)?;
    let (vals, _, _) = integrate_square(
        spec,
        space,
        &prep,
        &|t| carre_gamma_tilde(kernel, &spec.synthesize(&prep.coeffs_full, t)).expect("dims fixed"),
        config,
    )?;
    Ok(vals)
}

/// Closed-form `H` via the triple eigen-sum
/// `H(i)² = Σ_m Σ_{k,l} c_k c_l ⟨B_kl, φ_m⟩_m φ_m(i) / (λ_m + λ_k + λ_l)`.
pub fn square_h(
    spec: &SpectralData,
    kernel: &JumpKernel,
    space: &StateSpace,
    f: &[f64],
) -> Result<Field> {
    let prep = prepare(spec, kernel, f)?;
    let n = spec.n();
    let basis = spec.basis();
    let mut sq = vec![0.0; n];
    for (a, &k) in prep.active.iter().enumerate() {
        for &l in &prep.active[a..] {
            let factor = if k == l { 1.0 } else { 2.0 };
            let weight = factor * prep.coeffs[k] * prep.coeffs[l];
            let b = cross_gamma(kernel, spec, k, l);
            for mm in 0..n {
                let col: Vec<f64> = (0..n).map(|i| basis[(i, mm)]).collect();
                let w_m = space.inner(&b, &col);
                if w_m == 0.0 {
                    continue;
                }
                let denom = spec.lambdas()[mm] + spec.lambdas()[k] + spec.lambdas()[l];
                let coeff = weight * w_m / denom;
                for i in 0..n {
                    sq[i] += coeff * basis[(i, mm)];
                }
            }
        }
    }
    Ok(sq.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

fn smoothed_integrand(
    spec: &SpectralData,
    space: &StateSpace,
    kernel: &JumpKernel,
    coeffs_full: &[f64],
    tilde: bool,
    t: f64,
) -> Vec<f64> {
    let ptf = spec.synthesize(coeffs_full, t);
    let g = if tilde {
        carre_gamma_tilde(kernel, &ptf)
    } else {
        carre_gamma(kernel, &ptf)
    }
    .expect("dims fixed");
    let cg = spec.coefficients(&g).expect("dims fixed");
    let _ = space;
    spec.synthesize(&cg, t)
}

/// Quadrature evaluation of `H` (cross-check of [`square_h`]).
pub fn square_h_quad(
    spec: &SpectralData,
    kernel: &JumpKernel,
    space: &StateSpace,
    f: &[f64],
    config: &QuadratureConfig,
) -> Result<Field> {
    let prep = prepare(spec, kernel, f)?;
    let (vals, _, _) = integrate_square(
        spec,
        space,
        &prep,
        &|t| smoothed_integrand(spec, space, kernel, &prep.coeffs_full, false, t),
        config,
    )?;
    Ok(vals)
}

/// `H̃` by panel quadrature of `t ↦ P_t Γ̃[P_t f]`; χ depends on `t`, so no
/// general closed form exists.
pub fn square_h_tilde(
    spec: &SpectralData,
    kernel: &JumpKernel,
    space: &StateSpace,
    f: &[f64],
    config: &QuadratureConfig,
) -> Result<Field> {
    let prep = prepare(spec, kernel, f)?;
    let (vals, _, _) = integrate_square(
        spec,
        space,
        &prep,
        &|t| smoothed_integrand(spec, space, kernel, &prep.coeffs_full, true, t),
        config,
    )?;
    Ok(vals)
}

/// Per-quantity evaluation route recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
    Both,
}

impl std::fmt::Display for Method {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::ClosedForm => "closed_form",
            Method::Quadrature => "quadrature",
            Method::Both => "both",
        };
        fm.write_str(s)
    }
}

/// Per-state square-function values with weighted p-norms and evaluation
/// metadata.
#[derive(Debug, Clone)]
pub struct SquareFunctionReport {
    pub g: Field,
    pub g_tilde: Field,
    pub h: Field,
    pub h_tilde: Field,
    /// Rows `(p, [‖G‖_p, ‖G̃‖_p, ‖H‖_p, ‖H̃‖_p])`.
    pub p_norms: Vec<(f64, [f64; 4])>,
    pub methods: [Method; 4],
    pub quad_tolerance_achieved: f64,
    pub t_cut: f64,
}

/// Beyond this size the `O(n^4)` triple sum for H is abandoned for the
/// quadrature path.
pub const H_CLOSED_FORM_MAX_STATES: usize = 512;

pub fn compute_report(
    spec: &SpectralData,
    kernel: &JumpKernel,
    space: &StateSpace,
    f: &[f64],
    p_list: &[f64],
    config: &QuadratureConfig,
) -> Result<SquareFunctionReport> {
    let prep = prepare(spec, kernel, f)?;
    let g = square_g(spec, kernel, f)?;
    let eigenflow = eigenflow_lambda(spec, &prep).is_some();
    let g_tilde = square_g_tilde(spec, kernel, space, f, config)?;
    let (h, h_method) = if spec.n() <= H_CLOSED_FORM_MAX_STATES {
        (square_h(spec, kernel, space, f)?, Method::ClosedForm)
    } else {
        (
            square_h_quad(spec, kernel, space, f, config)?,
            Method::Quadrature,
        )
    };
    let mut achieved = 0.0f64;
    let mut t_cut = 0.0f64;
    let h_tilde = {
        if prep.active.is_empty() {
            vec![0.0; spec.n()]
        } else {
            let out = integrate_semi_infinite(
                &|t| smoothed_integrand(spec, space, kernel, &prep.coeffs_full, true, t),
                space.m(),
                first_panel_width(spec),
                &|t| spectral_tail(spec, &prep.coeffs, t),
                config,
            )?;
            achieved = out.achieved_rel_tol;
            t_cut = out.t_cut;
            out.values.into_iter().map(|v| v.max(0.0).sqrt()).collect()
        }
    };
    let mut p_norms = Vec::with_capacity(p_list.len());
    for &p in p_list {
        p_norms.push((
            p,
            [
                weighted_p_norm(space, &g, p)?,
                weighted_p_norm(space, &g_tilde, p)?,
                weighted_p_norm(space, &h, p)?,
                weighted_p_norm(space, &h_tilde, p)?,
            ],
        ));
    }
    Ok(SquareFunctionReport {
        g,
        g_tilde,
        h,
        h_tilde,
        p_norms,
        methods: [
            Method::ClosedForm,
            if eigenflow {
                Method::ClosedForm
            } else {
                Method::Quadrature
            },
            h_method,
            Method::Quadrature,
        ],
        quad_tolerance_achieved: achieved,
        t_cut,
    })
}

impl SquareFunctionReport {
    /// CSV with columns `state_index,G,G_tilde,H,H_tilde`.
    pub fn values_csv(&self) -> String {
        let mut out = String::from("state_index,G,G_tilde,H,H_tilde\n");
        for i in 0..self.g.len() {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                i, self.g[i], self.g_tilde[i], self.h[i], self.h_tilde[i]
            ));
        }
        out
    }

    /// CSV with columns `p,norm_G,norm_G_tilde,norm_H,norm_H_tilde,method,tol`.
    pub fn norms_csv(&self) -> String {
        let method = format!(
            "G:{}|Gt:{}|H:{}|Ht:{}",
            self.methods[0], self.methods[1], self.methods[2], self.methods[3]
        );
        let mut out = String::from("p,norm_G,norm_G_tilde,norm_H,norm_H_tilde,method,tol\n");
        for &(p, norms) in &self.p_norms {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{:.3e}\n",
                p, norms[0], norms[1], norms[2], norms[3], method, self.quad_tolerance_achieved
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_generator, build_kernel, dirichlet_energy, StateSpace};
    use crate::spectral::spectral_decompose;
    use crate::verify::{random_conservative_chain, random_field};
    use nalgebra::dmatrix;

    fn two_state() -> (StateSpace, JumpKernel, Generator) {
        let space = StateSpace::uniform(2);
        let kernel = build_kernel(&space, dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let gen = build_generator(&space, &kernel, vec![0.0, 0.0]).unwrap();
        (space, kernel, gen)
    }

    #[test]
    fn gamma_constant_vanishes() {
        let (_, kernel, _) = two_state();
        assert_eq!(carre_gamma(&kernel, &[2.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            carre_gamma_tilde(&kernel, &[2.0, 2.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn gamma_step_function() {
        let (_, kernel, _) = two_state();
        assert_eq!(
            carre_gamma(&kernel, &[0.0, 1.0]).unwrap(),
            vec![0.5, 0.5]
        );
    }

    #[test]
    fn gamma_tilde_step_and_tie() {
        let (_, kernel, _) = two_state();
        // |0| < |1| at state 0 -> weight 0; χ(1,0)=1 at state 1.
        assert_eq!(
            carre_gamma_tilde(&kernel, &[0.0, 1.0]).unwrap(),
            vec![0.0, 1.0]
        );
        // Tie |1| = |-1| -> weight 1/2 on both sides.
        assert_eq!(
            carre_gamma_tilde(&kernel, &[1.0, -1.0]).unwrap(),
            vec![2.0, 2.0]
        );
        assert_eq!(carre_gamma(&kernel, &[1.0, -1.0]).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn gamma_via_generator_matches() {
        let (_, _kernel, gen) = two_state();
        let via = gamma_via_generator(&gen, &[0.0, 1.0]).unwrap();
        assert_eq!(via, vec![0.5, 0.5]);
        for seed in 0..100 {
            let (space, kernel, gen) = random_conservative_chain(seed, 20);
            let u = random_field(seed ^ 0x5eed, 20);
            let direct = carre_gamma(&kernel, &u).unwrap();
            let via = gamma_via_generator(&gen, &u).unwrap();
            let _ = space;
            for (a, b) in direct.iter().zip(&via) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn gamma_via_generator_requires_conservative() {
        let space = StateSpace::uniform(2);
        let kernel = build_kernel(&space, dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let gen = build_generator(&space, &kernel, vec![0.1, 0.0]).unwrap();
        assert!(matches!(
            gamma_via_generator(&gen, &[1.0, 0.0]),
            Err(Error::NotConservative)
        ));
    }

    #[test]
    fn gamma_integrals_equal_energy() {
        for seed in 0..30 {
            let (space, kernel, _) = random_conservative_chain(seed, 15);
            let u = random_field(seed + 1000, 15);
            let energy = dirichlet_energy(&space, &kernel, &u, &u).unwrap();
            let ones = vec![1.0; 15];
            let g = carre_gamma(&kernel, &u).unwrap();
            let gt = carre_gamma_tilde(&kernel, &u).unwrap();
            assert!((space.inner(&g, &ones) - energy).abs() <= 1e-12 * energy.max(1.0));
            assert!((space.inner(&gt, &ones) - energy).abs() <= 1e-12 * energy.max(1.0));
            // Γ̃ ≤ 2Γ pointwise.
            for (a, b) in gt.iter().zip(&g) {
                assert!(*a <= 2.0 * b + 1e-14);
            }
        }
    }

    #[test]
    fn p_norm_reference_values() {
        let space = StateSpace::uniform(2);
        assert!((weighted_p_norm(&space, &[1.0, 1.0], 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(
            weighted_p_norm(&space, &[3.0, 4.0], f64::INFINITY).unwrap(),
            4.0
        );
        assert!(matches!(
            weighted_p_norm(&space, &[1.0, 1.0], 0.5),
            Err(Error::BadExponent { .. })
        ));
    }

    #[test]
    fn p_norm_triangle_inequality() {
        for seed in 0..20 {
            let (space, _, _) = random_conservative_chain(seed, 12);
            let u = random_field(seed + 1, 12);
            let v = random_field(seed + 2, 12);
            let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            for &p in &[1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
                let nu = weighted_p_norm(&space, &u, p).unwrap();
                let nv = weighted_p_norm(&space, &v, p).unwrap();
                let ns = weighted_p_norm(&space, &sum, p).unwrap();
                assert!(ns <= nu + nv + 1e-12);
            }
        }
    }

    #[test]
    fn constant_field_gives_zero_square_functions() {
        let (space, kernel, gen) = two_state();
        let spec = spectral_decompose(&gen, &space).unwrap();
        let f = vec![3.0, 3.0];
        let config = QuadratureConfig::default();
        assert_eq!(square_g(&spec, &kernel, &f).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            square_g_tilde(&spec, &kernel, &space, &f, &config).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            square_h(&spec, &kernel, &space, &f).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            square_h_tilde(&spec, &kernel, &space, &f, &config).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn eigenfunction_reduction_for_g() {
        // f eigenfunction with eigenvalue λ: G(i)² = Γ[f](i)/λ... with the
        // convention G² = ∫ e^{-2λt} Γ[f] dt = Γ[f]/(2λ).
        let (space, kernel, gen) = two_state();
        let spec = spectral_decompose(&gen, &space).unwrap();
        let f = vec![1.0, -1.0];
        let g = square_g(&spec, &kernel, &f).unwrap();
        let gamma = carre_gamma(&kernel, &f).unwrap();
        for i in 0..2 {
            assert!((g[i] * g[i] - gamma[i] / 4.0).abs() < 1e-12);
        }
        let _ = space;
    }

    #[test]
    fn h_two_state_eigenfunction() {
        let (space, kernel, gen) = two_state();
        let spec = spectral_decompose(&gen, &space).unwrap();
        let f = vec![1.0, -1.0];
        let h = square_h(&spec, &kernel, &space, &f).unwrap();
        for i in 0..2 {
            assert!((h[i] * h[i] - 0.5).abs() < 1e-12, "H²({i}) = {}", h[i] * h[i]);
        }
        let config = QuadratureConfig::default();
        let hq = square_h_quad(&spec, &kernel, &space, &f, &config).unwrap();
        for i in 0..2 {
            assert!((hq[i] - h[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_vs_quadrature_random_chains() {
        let config = QuadratureConfig::default();
        for seed in 0..8 {
            let (space, kernel, gen) = random_conservative_chain(seed, 15);
            let spec = spectral_decompose(&gen, &space).unwrap();
            let f = random_field(seed + 500, 15);
            let g = square_g(&spec, &kernel, &f).unwrap();
            let gq = square_g_quad(&spec, &kernel, &space, &f, &config).unwrap();
            let h = square_h(&spec, &kernel, &space, &f).unwrap();
            let hq = square_h_quad(&spec, &kernel, &space, &f, &config).unwrap();
            let scale_g = g.iter().fold(0.0f64, |a, &v| a.max(v));
            let scale_h = h.iter().fold(0.0f64, |a, &v| a.max(v));
            for i in 0..15 {
                assert!(
                    (g[i] * g[i] - gq[i] * gq[i]).abs() <= 1e-8 * scale_g * scale_g,
                    "seed {seed} state {i}: G² {} vs {}",
                    g[i] * g[i],
                    gq[i] * gq[i]
                );
                assert!(
                    (h[i] * h[i] - hq[i] * hq[i]).abs() <= 1e-8 * scale_h * scale_h,
                    "seed {seed} state {i}: H² {} vs {}",
                    h[i] * h[i],
                    hq[i] * hq[i]
                );
            }
        }
    }

    #[test]
    fn tilde_bounds_hold_pointwise() {
        let config = QuadratureConfig::default();
        for seed in 0..8 {
            let (space, kernel, gen) = random_conservative_chain(seed + 40, 12);
            let spec = spectral_decompose(&gen, &space).unwrap();
            let f = random_field(seed + 77, 12);
            let report = compute_report(&spec, &kernel, &space, &f, &[2.0], &config).unwrap();
            for i in 0..12 {
                assert!(report.g_tilde[i] <= 2f64.sqrt() * report.g[i] + 1e-10);
                assert!(report.h_tilde[i] <= 2f64.sqrt() * report.h[i] + 1e-10);
            }
        }
    }

    #[test]
    fn h_tilde_eigenflow_cross_check() {
        // For an eigenflow the χ weight freezes, so H̃²(i) must equal the
        // closed sum Σ_m ⟨Γ̃[f], φ_m⟩_m φ_m(i) / (2λ + λ_m).
        let (space, kernel, gen) = two_state();
        let spec = spectral_decompose(&gen, &space).unwrap();
        let f = vec![1.0, -1.0];
        let config = QuadratureConfig::default();
        let ht = square_h_tilde(&spec, &kernel, &space, &f, &config).unwrap();
        let gt = carre_gamma_tilde(&kernel, &f).unwrap();
        let lambda = 2.0;
        let cg = spec.coefficients(&gt).unwrap();
        for i in 0..2 {
            let closed: f64 = (0..2)
                .map(|k| cg[k] * spec.basis()[(i, k)] / (2.0 * lambda + spec.lambdas()[k]))
                .sum();
            assert!((ht[i] * ht[i] - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn componentwise_stationary_part_converges() {
        // Disconnected conservative chain: the stationary part is constant
        // per component, so Γ[f̄] vanishes on every edge and the divergence
        // guard must stay quiet even though the two component means differ.
        let space = StateSpace::uniform(4);
        let kernel = build_kernel(
            &space,
            dmatrix![
                0.0, 1.0, 0.0, 0.0;
                1.0, 0.0, 0.0, 0.0;
                0.0, 0.0, 0.0, 1.0;
                0.0, 0.0, 1.0, 0.0
            ],
        )
        .unwrap();
        let gen = build_generator(&space, &kernel, vec![0.0; 4]).unwrap();
        let spec = spectral_decompose(&gen, &space).unwrap();
        // Different component means: still fine, f̄ constant per component.
        let f = vec![1.0, 0.0, 5.0, 4.0];
        assert!(square_g(&spec, &kernel, &f).is_ok());
    }

    #[test]
    fn maximal_function_properties() {
        let (space, kernel, gen) = two_state();
        let spec = spectral_decompose(&gen, &space).unwrap();
        let _ = kernel;
        // Conservative, f ≡ 1: f* ≡ 1.
        let grid: Vec<f64> = (0..40).map(|k| k as f64 * 0.7).collect();
        let star = maximal_function(&spec, &[1.0, 1.0], &grid).unwrap();
        for &v in &star {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // Nonnegative eigenfunction decays: f* = f. Use a killed chain so
        // a positive eigenfunction exists.
        let space2 = StateSpace::uniform(2);
        let kernel2 = build_kernel(&space2, dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let gen2 = build_generator(&space2, &kernel2, vec![0.5, 0.5]).unwrap();
        let spec2 = spectral_decompose(&gen2, &space2).unwrap();
        let f2 = vec![1.0, 1.0]; // eigenvector of λ = 0.5 under uniform killing
        let star2 = maximal_function(&spec2, &f2, &grid).unwrap();
        for (s, f) in star2.iter().zip(&f2) {
            assert!((s - f).abs() < 1e-12);
        }
        // f* ≥ |f| always.
        let f3 = vec![0.3, -2.0];
        let star3 = maximal_function(&spec, &f3, &grid).unwrap();
        for (s, f) in star3.iter().zip(&f3) {
            assert!(*s >= f.abs() - 1e-14);
        }
        // Grid without 0 is rejected.
        assert!(matches!(
            maximal_function(&spec, &f3, &[0.5, 1.0]),
            Err(Error::GridTooCoarse)
        ));
    }

    #[test]
    fn p2_norm_equalities() {
        let config = QuadratureConfig::default();
        for seed in 0..5 {
            let (space, kernel, gen) = random_conservative_chain(seed + 200, 10);
            let spec = spectral_decompose(&gen, &space).unwrap();
            let mut f = random_field(seed + 300, 10);
            let mean = space.mean(&f);
            f.iter_mut().for_each(|v| *v -= mean);
            let report = compute_report(&spec, &kernel, &space, &f, &[2.0], &config).unwrap();
            let target = weighted_p_norm(&space, &f, 2.0).unwrap() / 2f64.sqrt();
            let (_, norms) = report.p_norms[0];
            for &v in &norms {
                assert!(
                    (v - target).abs() <= 1e-8 * target,
                    "seed {seed}: {v} vs {target}"
                );
            }
        }
    }

    #[test]
    fn report_csv_schema() {
        let (space, kernel, gen) = two_state();
        let spec = spectral_decompose(&gen, &space).unwrap();
        let config = QuadratureConfig::default();
        let report =
            compute_report(&spec, &kernel, &space, &[1.0, -1.0], &[2.0, 4.0], &config).unwrap();
        let values = report.values_csv();
        assert!(values.starts_with("state_index,G,G_tilde,H,H_tilde\n"));
        assert_eq!(values.lines().count(), 3);
        let norms = report.norms_csv();
        assert!(norms.starts_with("p,norm_G,norm_G_tilde,norm_H,norm_H_tilde,method,tol\n"));
        assert_eq!(norms.lines().count(), 3);
    }
}
