//! The 2n-state chain family discretizing reflected Brownian motion on an
//! interval with the middle segment removed. The nearest-neighbor walk has
//! rate 1 except across the removed segment (rate `α_n`), chosen so that a
//! shifted cosine is an exact eigenfunction. Along this family the ratio
//! `‖G̃‖_p / ‖f‖_p` grows like `n^{1/2 - 1/p}` for `p > 2`, while
//! `‖H‖_p / ‖f‖_p` stays bounded.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::model::{
    build_generator, build_kernel, Field, Generator, JumpKernel, StateSpace,
};
use crate::quad::integrate_scalar;
use crate::squarefn::weighted_p_norm;
use crate::{Error, Result};

/// Parameters and eigenpair of the 2n-state chain.
#[derive(Debug, Clone)]
pub struct BrownChainSpec {
    n: usize,
    alpha_n: f64,
    lambda_n: f64,
    /// Eigenfunction `f(k) = cos((2k-1)π/8n)` for `k ≤ n`, continued
    /// antisymmetrically: `f(2n+1-k) = -f(k)`.
    f: Field,
}

impl BrownChainSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::BadConfig("chain parameter n must be >= 1".into()));
        }
        let theta = PI / (8.0 * n as f64);
        let alpha_n = 1.0 / (1.0 + 1.0 / theta.tan());
        let lambda_n = 4.0 * theta.sin().powi(2);
        let f: Field = (1..=2 * n)
            .map(|k| {
                if k <= n {
                    ((2 * k - 1) as f64 * theta).cos()
                } else {
                    ((2 * k - 1 + 4 * n) as f64 * theta).cos()
                }
            })
            .collect();
        Ok(Self {
            n,
            alpha_n,
            lambda_n,
            f,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha_n(&self) -> f64 {
        self.alpha_n
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambda_n
    }

    pub fn f(&self) -> &Field {
        &self.f
    }
}

/// Builds the 2n-state chain: rate 1 between neighbors, rate `α_n` across
/// the removed segment between states `n` and `n+1`, counting measure,
/// no killing.
pub fn build_brown_chain(
    n: usize,
) -> Result<(StateSpace, JumpKernel, Generator, BrownChainSpec)> {
    let spec = BrownChainSpec::new(n)?;
    let size = 2 * n;
    let space = StateSpace::uniform(size);
    let mut rates = DMatrix::zeros(size, size);
    for i in 0..size - 1 {
        let r = if i + 1 == n { spec.alpha_n } else { 1.0 };
        rates[(i, i + 1)] = r;
        rates[(i + 1, i)] = r;
    }
    let kernel = build_kernel(&space, rates)?;
    let gen = build_generator(&space, &kernel, vec![0.0; size])?;
    Ok((space, kernel, gen, spec))
}

/// Maximal residual `max_k |(Af)(k) + λ_n f(k)|` of the eigenpair.
pub fn verify_eigenpair(gen: &Generator, spec: &BrownChainSpec) -> Result<f64> {
    let af = gen.apply(spec.f())?;
    Ok(af
        .iter()
        .zip(spec.f())
        .map(|(&a, &v)| (a + spec.lambda_n * v).abs())
        .fold(0.0f64, f64::max))
}

/// Closed-form `G̃` of the eigenfunction: `G̃(k)² = sin²(kπ/4n)/2` for
/// `k < n`, `G̃(n)² = (1 + cot(π/8n))/8`, continued symmetrically via
/// `G̃(2n+1-k) = G̃(k)`.
pub fn closed_form_g_tilde(spec: &BrownChainSpec) -> Field {
    let n = spec.n;
    let mut g = vec![0.0; 2 * n];
    for k in 1..=n {
        let sq = if k < n {
            0.5 * ((k as f64) * PI / (4.0 * n as f64)).sin().powi(2)
        } else {
            (1.0 + 1.0 / (PI / (8.0 * n as f64)).tan()) / 8.0
        };
        let v = sq.sqrt();
        g[k - 1] = v;
        g[2 * n - k] = v;
    }
    g
}

/// `c_p = 2 ∫_0^1 cos^p(πx/4) dx`, evaluated by Gauss-Legendre quadrature.
pub fn cos_power_constant(p: f64) -> f64 {
    2.0 * integrate_scalar(&|x| (PI * x / 4.0).cos().powf(p), 0.0, 1.0, 128)
}

/// Limit of `(‖G̃‖_p/‖f‖_p) / n^{1/2-1/p}` as `n → ∞`.
pub fn target_constant(p: f64) -> f64 {
    2f64.powf(1.0 / p) / (PI.sqrt() * cos_power_constant(p).powf(1.0 / p))
}

/// One row of the asymptotic ratio scan.
#[derive(Debug, Clone)]
pub struct BrownRow {
    pub n: usize,
    pub p: f64,
    pub ratio_g_tilde: f64,
    /// `ratio_g_tilde / n^{1/2 - 1/p}`.
    pub normalized: f64,
    pub target_constant: f64,
    pub ratio_h: f64,
    /// Share `G̃(n)^p / ‖G̃‖_p^p` of the dominating state (reported only).
    pub top_share: f64,
}

/// `‖G̃‖_p` and `‖f‖_p` from the exact closed-form sums.
fn closed_form_norms(spec: &BrownChainSpec, p: f64) -> (f64, f64, f64) {
    let n = spec.n;
    let g = closed_form_g_tilde(spec);
    let g_norm_p: f64 = 2.0 * (1..=n).map(|k| g[k - 1].powf(p)).sum::<f64>();
    let f_norm_p: f64 = 2.0
        * (1..=n)
            .map(|k| spec.f[k - 1].abs().powf(p))
            .sum::<f64>();
    let top_share = 2.0 * g[n - 1].powf(p) / g_norm_p;
    (
        g_norm_p.powf(1.0 / p),
        f_norm_p.powf(1.0 / p),
        top_share,
    )
}

/// Scans the family over `n_list`, reporting the `G̃` ratio (closed form),
/// its normalization against the asymptotic constant, and the `H` ratio
/// (spectral triple sum).
pub fn ratio_scan(p: f64, n_list: &[usize]) -> Result<Vec<BrownRow>> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(Error::BadExponent { p });
    }
    let target = target_constant(p);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let (space, kernel, gen, spec) = build_brown_chain(n)?;
        let (g_norm, f_norm, top_share) = closed_form_norms(&spec, p);
        let ratio_g_tilde = g_norm / f_norm;
        let sdata = crate::spectral::spectral_decompose(&gen, &space)?;
        let h = crate::squarefn::square_h(&sdata, &kernel, &space, spec.f())?;
        let ratio_h = weighted_p_norm(&space, &h, p)? / f_norm;
        rows.push(BrownRow {
            n,
            p,
            ratio_g_tilde,
            normalized: ratio_g_tilde / (n as f64).powf(0.5 - 1.0 / p),
            target_constant: target,
            ratio_h,
            top_share,
        });
    }
    Ok(rows)
}

/// CSV with columns `n,p,ratio_G_tilde,normalized,target_constant,ratio_H`.
pub fn scan_csv(rows: &[BrownRow]) -> String {
    let mut out = String::from("n,p,ratio_G_tilde,normalized,target_constant,ratio_H\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.n, r.p, r.ratio_g_tilde, r.normalized, r.target_constant, r.ratio_h
        ));
    }
    out
}
