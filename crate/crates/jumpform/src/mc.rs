//! Continuous-time Markov chain simulation and Monte Carlo verification of
//! the parabolic-martingale identities `E_x M_T² = E_x⟨M⟩_T = E_x[M]_T`,
//! with `M_T = f(X_T) - P_T f(X_0)`,
//! `⟨M⟩_T = ∫_0^T 2Γ[P_{T-s}f](X_s) ds`, and `[M]_T` the sum of squared
//! martingale jumps.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::{Generator, JumpKernel, StateSpace};
use crate::quad::gauss_legendre;
use crate::spectral::SpectralData;
use crate::{Error, Result};

/// Initial law of the simulated paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartState {
    Fixed(usize),
    /// Initial state drawn with probability `m_i / Σ m`.
    Stationary,
}

/// Simulation controls.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub big_t: f64,
    pub paths: usize,
    pub seed: u64,
    pub start_state: StartState,
    /// Gauss-Legendre nodes per holding interval for the ⟨M⟩ integral.
    pub gauss_order: usize,
}

impl McConfig {
    pub fn new(big_t: f64, paths: usize, seed: u64, start_state: StartState) -> Result<Self> {
        if !(big_t > 0.0) {
            return Err(Error::BadConfig(format!("horizon T = {big_t} must be > 0")));
        }
        if paths == 0 {
            return Err(Error::BadConfig("need at least one path".into()));
        }
        Ok(Self {
            big_t,
            paths,
            seed,
            start_state,
            gauss_order: 8,
        })
    }
}

/// One realized trajectory on `[0, T]`. `states[0]` is the initial state;
/// `times[k]` is the instant of the jump into `states[k+1]`.
#[derive(Debug, Clone)]
pub struct Path {
    pub states: Vec<usize>,
    pub times: Vec<f64>,
    pub killed_at: Option<f64>,
}

impl Path {
    /// State occupied at time `t` (before any killing).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        self.states[k]
    }
}

/// Samples one CTMC path: exponential holding time with rate
/// `q_i = Σ_j R_ij + κ_i`, jump to `j` with probability `R_ij / q_i`,
/// killing with probability `κ_i / q_i`, truncated at `T`.
pub fn simulate_path(
    space: &StateSpace,
    kernel: &JumpKernel,
    gen: &Generator,
    config: &McConfig,
    rng: &mut impl Rng,
) -> Path {
    let n = space.n();
    let mut state = match config.start_state {
        StartState::Fixed(x) => x,
        StartState::Stationary => {
            let mass: f64 = space.m().iter().sum();
            let mut u = rng.gen_range(0.0..mass);
            let mut chosen = n - 1;
            for (i, &w) in space.m().iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        }
    };
    let mut t = 0.0;
    let mut path = Path {
        states: vec![state],
        times: Vec::new(),
        killed_at: None,
    };
    loop {
        let q: f64 =
            (0..n).map(|j| kernel.rate(state, j)).sum::<f64>() + gen.kappa()[state];
        if q == 0.0 {
            return path;
        }
        t += exp_variate(rng, q);
        if t > config.big_t {
            return path;
        }
        // Destination: killing with probability κ/q, else jump j w.p. R_ij/q.
        let mut u = rng.gen_range(0.0..q);
        if u < gen.kappa()[state] {
            path.killed_at = Some(t);
            return path;
        }
        u -= gen.kappa()[state];
        let mut next = state;
        for j in 0..n {
            let r = kernel.rate(state, j);
            if u < r {
                next = j;
                break;
            }
            u -= r;
        }
        state = next;
        path.states.push(state);
        path.times.push(t);
    }
}

/// Exponential variate with rate `q` from a uniform draw.
fn exp_variate(rng: &mut impl Rng, q: f64) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -u.ln() / q
}

/// `M_T = f(X_T) - P_T f(X_0)` for a surviving path. The identity suite is
/// restricted to conservative chains, so killing never occurs here.
pub fn parabolic_martingale_terminal(
    spec: &SpectralData,
    gen: &Generator,
    f: &[f64],
    big_t: f64,
    path: &Path,
) -> Result<f64> {
    if !gen.conservative() {
        return Err(Error::NotConservative);
    }
    let c = spec.coefficients(f)?;
    let terminal = f[path.state_at(big_t)];
    Ok(terminal - spec.point_value(&c, big_t, path.states[0]))
}

/// Precomputed spectral data for evaluating `2Γ[P_{T-s}f](x)` as a short
/// double sum over the active modes of `f`.
pub struct BracketData {
    lambdas: Vec<f64>,
    coeffs: Vec<f64>,
    /// `b[x][a*k + b] = B_{ab}(x)` over active modes, `k` modes total.
    b: Vec<Vec<f64>>,
    coeffs_full: Vec<f64>,
}

impl BracketData {
    pub fn new(spec: &SpectralData, kernel: &JumpKernel, f: &[f64]) -> Result<Self> {
        let coeffs_full = spec.coefficients(f)?;
        let c_max = coeffs_full.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let active: Vec<usize> = (0..spec.n())
            .filter(|&k| coeffs_full[k].abs() > 1e-14 * c_max)
            .collect();
        let n = spec.n();
        let basis = spec.basis();
        let kk = active.len();
        let mut b = vec![vec![0.0; kk * kk]; n];
        for x in 0..n {
            for (a, &ka) in active.iter().enumerate() {
                for (bb, &kb) in active.iter().enumerate().skip(a) {
                    let mut acc = 0.0;
                    for j in 0..n {
                        let r = kernel.rate(x, j);
                        if r > 0.0 {
                            acc += r
                                * (basis[(j, ka)] - basis[(x, ka)])
                                * (basis[(j, kb)] - basis[(x, kb)]);
                        }
                    }
                    let v = 0.5 * acc;
                    b[x][a * kk + bb] = v;
                    b[x][bb * kk + a] = v;
                }
            }
        }
        Ok(Self {
            lambdas: active.iter().map(|&k| spec.lambdas()[k]).collect(),
            coeffs: active.iter().map(|&k| coeffs_full[k]).collect(),
            b,
            coeffs_full,
        })
    }

    /// `Γ[P_u f](x) = Σ_{a,b} c_a c_b e^{-(λ_a+λ_b)u} B_ab(x)`.
    pub fn gamma_at(&self, u: f64, x: usize) -> f64 {
        let kk = self.lambdas.len();
        let d: Vec<f64> = self
            .coeffs
            .iter()
            .zip(&self.lambdas)
            .map(|(&c, &l)| c * (-l * u).exp())
            .collect();
        let row = &self.b[x];
        let mut acc = 0.0;
        for a in 0..kk {
            for bb in 0..kk {
                acc += d[a] * d[bb] * row[a * kk + bb];
            }
        }
        acc
    }
}

/// `⟨M⟩_T = ∫_0^T 2Γ[P_{T-s}f](X_s) ds`, integrated per holding interval
/// with Gauss-Legendre nodes (the integrand is a finite exponential sum in
/// `s` on each interval).
pub fn sharp_bracket(data: &BracketData, big_t: f64, path: &Path, gauss_order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(gauss_order);
    let mut acc = 0.0;
    let mut seg_start = 0.0;
    for k in 0..=path.times.len() {
        let seg_end = if k < path.times.len() {
            path.times[k].min(big_t)
        } else {
            big_t
        };
        if seg_end > seg_start {
            let x = path.states[k];
            let half = 0.5 * (seg_end - seg_start);
            let mid = 0.5 * (seg_end + seg_start);
            for (&z, &w) in nodes.iter().zip(&weights) {
                let s = mid + half * z;
                acc += w * half * 2.0 * data.gamma_at(big_t - s, x);
            }
        }
        seg_start = seg_end;
        if seg_start >= big_t {
            break;
        }
    }
    acc
}

/// `[M]_T = Σ_{jumps s ≤ T} (P_{T-s}f(X_s) - P_{T-s}f(X_{s-}))²` (the
/// continuous part of `M` vanishes for a pure-jump chain).
pub fn square_bracket(spec: &SpectralData, data: &BracketData, big_t: f64, path: &Path) -> f64 {
    let mut acc = 0.0;
    for (k, &s) in path.times.iter().enumerate() {
        if s > big_t {
            break;
        }
        let before = path.states[k];
        let after = path.states[k + 1];
        let d = spec.point_value(&data.coeffs_full, big_t - s, after)
            - spec.point_value(&data.coeffs_full, big_t - s, before);
        acc += d * d;
    }
    acc
}

/// Monte Carlo estimates of the three bracket quantities with standard
/// errors. Identical seeds reproduce the report bit-for-bit regardless of
/// thread count.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub est_m2: f64,
    pub se_m2: f64,
    pub est_sharp: f64,
    pub se_sharp: f64,
    pub est_square: f64,
    pub se_square: f64,
    pub paths_used: usize,
}

impl McReport {
    /// CSV with columns
    /// `seed,n,T,paths,est_M2,se_M2,est_sharp,se_sharp,est_square,se_square`.
    pub fn csv(&self, seed: u64, n: usize, big_t: f64) -> String {
        format!(
            "seed,n,T,paths,est_M2,se_M2,est_sharp,se_sharp,est_square,se_square\n\
             {},{},{},{},{:.12e},{:.3e},{:.12e},{:.3e},{:.12e},{:.3e}\n",
            seed,
            n,
            big_t,
            self.paths_used,
            self.est_m2,
            self.se_m2,
            self.est_sharp,
            self.se_sharp,
            self.est_square,
            self.se_square
        )
    }
}

fn mean_se(samples: impl Iterator<Item = f64> + Clone, count: usize) -> (f64, f64) {
    let mean = samples.clone().sum::<f64>() / count as f64;
    let var = samples.map(|v| (v - mean).powi(2)).sum::<f64>() / (count.saturating_sub(1) as f64);
    (mean, (var / count as f64).sqrt())
}

/// Runs the path ensemble and estimates `E M_T²`, `E⟨M⟩_T`, `E[M]_T`.
/// Each path uses its own counter-based RNG stream, and samples are reduced
/// in path order.
pub fn run_mc(
    space: &StateSpace,
    kernel: &JumpKernel,
    gen: &Generator,
    spec: &SpectralData,
    f: &[f64],
    config: &McConfig,
) -> Result<McReport> {
    if !gen.conservative() {
        return Err(Error::NotConservative);
    }
    let data = BracketData::new(spec, kernel, f)?;
    let samples: Vec<(f64, f64, f64)> = (0..config.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            let path = simulate_path(space, kernel, gen, config, &mut rng);
            let m = parabolic_martingale_terminal(spec, gen, f, config.big_t, &path)
                .expect("conservative checked above");
            (
                m * m,
                sharp_bracket(&data, config.big_t, &path, config.gauss_order),
                square_bracket(spec, &data, config.big_t, &path),
            )
        })
        .collect();
    let count = samples.len();
    let (est_m2, se_m2) = mean_se(samples.iter().map(|s| s.0), count);
    let (est_sharp, se_sharp) = mean_se(samples.iter().map(|s| s.1), count);
    let (est_square, se_square) = mean_se(samples.iter().map(|s| s.2), count);
    Ok(McReport {
        est_m2,
        se_m2,
        est_sharp,
        se_sharp,
        est_square,
        se_square,
        paths_used: count,
    })
}

/// One exponent's worth of Burkholder-Davis-Gundy moment estimates.
#[derive(Debug, Clone)]
pub struct BdgRow {
    pub p: f64,
    pub e_abs_m_p: f64,
    pub e_square_p2: f64,
    pub e_sharp_p2: f64,
}

/// Records `E|M_T|^p`, `E([M]_T)^{p/2}`, `E(⟨M⟩_T)^{p/2}` per exponent.
/// The constants in the moment comparisons are not pinned anywhere, so the
/// study reports ratios rather than asserting bounds.
pub fn bdg_ratio_study(
    space: &StateSpace,
    kernel: &JumpKernel,
    gen: &Generator,
    spec: &SpectralData,
    f: &[f64],
    p_list: &[f64],
    config: &McConfig,
) -> Result<Vec<BdgRow>> {
    if !gen.conservative() {
        return Err(Error::NotConservative);
    }
    for &p in p_list {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::BadExponent { p });
        }
    }
    let data = BracketData::new(spec, kernel, f)?;
    let samples: Vec<(f64, f64, f64)> = (0..config.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            let path = simulate_path(space, kernel, gen, config, &mut rng);
            let m = parabolic_martingale_terminal(spec, gen, f, config.big_t, &path)
                .expect("conservative checked above");
            (
                m.abs(),
                square_bracket(spec, &data, config.big_t, &path),
                sharp_bracket(&data, config.big_t, &path, config.gauss_order),
            )
        })
        .collect();
    let count = samples.len() as f64;
    Ok(p_list
        .iter()
        .map(|&p| BdgRow {
            p,
            e_abs_m_p: samples.iter().map(|s| s.0.powf(p)).sum::<f64>() / count,
            e_square_p2: samples.iter().map(|s| s.1.powf(p / 2.0)).sum::<f64>() / count,
            e_sharp_p2: samples.iter().map(|s| s.2.powf(p / 2.0)).sum::<f64>() / count,
        })
        .collect())
}
