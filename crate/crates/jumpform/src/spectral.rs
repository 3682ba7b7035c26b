//! Spectral realization of the semigroup. The negative generator is
//! symmetrized as `S = D^{1/2} (-A) D^{-1/2}` with `D = diag(m)`, decomposed
//! once, and `P_t f = Σ_k e^{-λ_k t} ⟨f, φ_k⟩_m φ_k` is evaluated from the
//! stored m-orthonormal eigenbasis.

use nalgebra::DMatrix;

use crate::model::{Field, Generator, StateSpace};
use crate::quad::gauss_legendre;
use crate::{Error, Result};

/// Eigenvalues and m-orthonormal eigenbasis of `-A`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    lambdas: Vec<f64>,
    /// Column k is the eigenvector φ_k; ⟨φ_k, φ_l⟩_m = δ_kl.
    basis: DMatrix<f64>,
    zero_modes: Vec<usize>,
    gap: f64,
    m: Vec<f64>,
}

impl SpectralData {
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn zero_modes(&self) -> &[usize] {
        &self.zero_modes
    }

    /// Smallest strictly positive eigenvalue, `f64::INFINITY` if none.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    /// Spectral coefficients `c_k = ⟨f, φ_k⟩_m`.
    pub fn coefficients(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if f.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: f.len(),
            });
        }
        let mut c = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate() {
            *ck = (0..n).map(|i| f[i] * self.basis[(i, k)] * self.m[i]).sum();
        }
        Ok(c)
    }

    /// Reassembles `Σ_k c_k e^{-λ_k t} φ_k` from coefficients.
    pub fn synthesize(&self, c: &[f64], t: f64) -> Field {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (k, &ck) in c.iter().enumerate() {
            if ck == 0.0 {
                continue;
            }
            let w = ck * (-self.lambdas[k] * t).exp();
            for i in 0..n {
                out[i] += w * self.basis[(i, k)];
            }
        }
        out
    }

    /// Pointwise `P_t f(x)` from precomputed coefficients.
    pub fn point_value(&self, c: &[f64], t: f64, x: usize) -> f64 {
        c.iter()
            .enumerate()
            .map(|(k, &ck)| ck * (-self.lambdas[k] * t).exp() * self.basis[(x, k)])
            .sum()
    }
}

/// Decomposes the negative generator in the m-weighted inner product.
pub fn spectral_decompose(gen: &Generator, space: &StateSpace) -> Result<SpectralData> {
    let n = space.n();
    if gen.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: gen.n(),
        });
    }
    let m = space.m();
    let a = gen.matrix();
    let a_max = a.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));

    // m-symmetry check before symmetrizing.
    let mut sym_residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            sym_residual = sym_residual.max((m[i] * a[(i, j)] - m[j] * a[(j, i)]).abs());
        }
    }
    let m_max = m.iter().fold(0.0f64, |acc, &v| acc.max(v));
    if sym_residual > 1e-10 * a_max.max(1.0) * m_max {
        return Err(Error::NonSymmetric {
            residual: sym_residual,
        });
    }

    let sqrt_m: Vec<f64> = m.iter().map(|&w| w.sqrt()).collect();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = -a[(i, j)] * sqrt_m[i] / sqrt_m[j];
        }
    }
    // Enforce exact symmetry of the symmetrized matrix.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
    let eig = s.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let clamp = 1e-12 * a_max.max(1.0);
    let mut lambdas = Vec::with_capacity(n);
    let mut basis = DMatrix::zeros(n, n);
    let mut zero_modes = Vec::new();
    for (k, &src) in order.iter().enumerate() {
        let mut lambda = eig.eigenvalues[src];
        if lambda < -clamp {
            return Err(Error::EigSolverFailure);
        }
        if lambda.abs() <= clamp {
            lambda = 0.0;
            zero_modes.push(k);
        }
        lambdas.push(lambda);
        // φ_k = D^{-1/2} q_k, sign fixed by first nonzero component.
        let mut col: Vec<f64> = (0..n)
            .map(|i| eig.eigenvectors[(i, src)] / sqrt_m[i])
            .collect();
        let norm = col.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if let Some(&lead) = col.iter().find(|&&v| v.abs() > 1e-12 * norm) {
            if lead < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
        for i in 0..n {
            basis[(i, k)] = col[i];
        }
    }
    let gap = lambdas
        .iter()
        .copied()
        .find(|&l| l > 0.0)
        .unwrap_or(f64::INFINITY);
    Ok(SpectralData {
        lambdas,
        basis,
        zero_modes,
        gap,
        m: m.to_vec(),
    })
}

/// Evaluates `P_t f`.
pub fn apply_semigroup(spec: &SpectralData, t: f64, f: &[f64]) -> Result<Field> {
    if t < 0.0 {
        return Err(Error::NegativeTime { t });
    }
    let c = spec.coefficients(f)?;
    Ok(spec.synthesize(&c, t))
}

/// Projection of `f` onto the zero-mode span; equals `lim_{T→∞} P_T f`.
pub fn stationary_part(spec: &SpectralData, f: &[f64]) -> Result<Field> {
    let c = spec.coefficients(f)?;
    let n = spec.n();
    let mut out = vec![0.0; n];
    for &k in spec.zero_modes() {
        for i in 0..n {
            out[i] += c[k] * spec.basis[(i, k)];
        }
    }
    Ok(out)
}

/// Residual of the self-duality identity
/// `Σ_i m_i E_i ∫_0^T φ(T-t, X_t) dt = Σ_i m_i E_i ∫_0^T φ(t, X_t) dt`
/// with both sides evaluated by Gauss-Legendre quadrature over `[0, T]`.
pub fn duality_check(
    spec: &SpectralData,
    space: &StateSpace,
    gen: &Generator,
    phi: &dyn Fn(f64, usize) -> f64,
    big_t: f64,
    order: usize,
) -> Result<f64> {
    if !gen.conservative() {
        return Err(Error::NotConservative);
    }
    let n = space.n();
    let (nodes, weights) = gauss_legendre(order);
    let half = 0.5 * big_t;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (&x, &w) in nodes.iter().zip(&weights) {
        let t = half * (x + 1.0);
        let reversed: Field = (0..n).map(|i| phi(big_t - t, i)).collect();
        let forward: Field = (0..n).map(|i| phi(t, i)).collect();
        let p_rev = apply_semigroup(spec, t, &reversed)?;
        let p_fwd = apply_semigroup(spec, t, &forward)?;
        let ones = vec![1.0; n];
        lhs += w * half * space.inner(&p_rev, &ones);
        rhs += w * half * space.inner(&p_fwd, &ones);
    }
    Ok((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-300))
}
