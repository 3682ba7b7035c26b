//! Finite-state Dirichlet-form data model: state space with reference
//! measure, symmetric jumping kernel, generator with optional killing, and
//! the jump-type Dirichlet energy
//! `E(u,v) = 1/2 ΣΣ (u_j - u_i)(v_j - v_i) R_ij m_i`.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative tolerance for the detailed-balance check `m_i R_ij = m_j R_ji`.
pub const DETAILED_BALANCE_TOL: f64 = 1e-12;

/// Finite state set with strictly positive reference-measure weights.
#[derive(Debug, Clone)]
pub struct StateSpace {
    m: Vec<f64>,
}

impl StateSpace {
    pub fn new(m: Vec<f64>) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::BadConfig("state space must be nonempty".into()));
        }
        if let Some((i, &w)) = m.iter().enumerate().find(|(_, &w)| !(w > 0.0)) {
            return Err(Error::BadConfig(format!(
                "measure weight m[{i}] = {w} must be strictly positive"
            )));
        }
        Ok(Self { m })
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(vec![1.0; n]).expect("n >= 1")
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    /// Weighted inner product `⟨u,v⟩_m = Σ u_i v_i m_i`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.m
            .iter()
            .zip(u.iter().zip(v))
            .map(|(&w, (&a, &b))| w * a * b)
            .sum()
    }

    /// m-weighted mean of a field.
    pub fn mean(&self, u: &[f64]) -> f64 {
        let mass: f64 = self.m.iter().sum();
        self.inner(u, &vec![1.0; self.n()]) / mass
    }
}

/// A real-valued function on the state space.
pub type Field = Vec<f64>;

/// Nonnegative jump-rate matrix with zero diagonal, in detailed balance
/// with the reference measure: `m_i R_ij = m_j R_ji`.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    rates: DMatrix<f64>,
}

impl JumpKernel {
    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    pub fn n(&self) -> usize {
        self.rates.nrows()
    }
}

/// Validates a rate matrix against the state space.
pub fn build_kernel(space: &StateSpace, rates: DMatrix<f64>) -> Result<JumpKernel> {
    let n = space.n();
    if rates.nrows() != n || rates.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rates.nrows().max(rates.ncols()),
        });
    }
    for i in 0..n {
        for j in 0..n {
            let r = rates[(i, j)];
            if r < 0.0 || !r.is_finite() {
                return Err(Error::NegativeRate { i, j, value: r });
            }
            if i == j && r != 0.0 {
                return Err(Error::BadConfig(format!(
                    "diagonal rate R[{i}][{i}] = {r} must be zero"
                )));
            }
        }
    }
    // Detailed balance; report the worst offending pair.
    let m = space.m();
    let mut worst = (0usize, 0usize, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        for j in (i + 1)..n {
            let lhs = m[i] * rates[(i, j)];
            let rhs = m[j] * rates[(j, i)];
            let scale = lhs.abs().max(rhs.abs());
            if scale == 0.0 {
                continue;
            }
            let residual = (lhs - rhs).abs() / scale;
            if residual > worst.4 {
                worst = (i, j, lhs, rhs, residual);
            }
        }
    }
    if worst.4 > DETAILED_BALANCE_TOL {
        return Err(Error::DetailedBalanceViolation {
            i: worst.0,
            j: worst.1,
            lhs: worst.2,
            rhs: worst.3,
            residual: worst.4,
        });
    }
    Ok(JumpKernel { rates })
}

/// Infinitesimal generator `A` with killing rates `kappa`. Off-diagonal
/// entries are the jump rates; the diagonal makes each row sum to
/// `-kappa_i`.
#[derive(Debug, Clone)]
pub struct Generator {
    matrix: DMatrix<f64>,
    kappa: Vec<f64>,
    conservative: bool,
}

impl Generator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn conservative(&self) -> bool {
        self.conservative
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies `A` to a field.
    pub fn apply(&self, u: &[f64]) -> Result<Field> {
        let n = self.n();
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u.len(),
            });
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = (0..n).map(|j| self.matrix[(i, j)] * u[j]).sum();
        }
        Ok(out)
    }
}

pub fn build_generator(
    space: &StateSpace,
    kernel: &JumpKernel,
    kappa: Vec<f64>,
) -> Result<Generator> {
    let n = space.n();
    if kappa.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: kappa.len(),
        });
    }
    if let Some((i, &k)) = kappa.iter().enumerate().find(|(_, &k)| k < 0.0) {
        return Err(Error::NegativeKilling { i, value: k });
    }
    let mut matrix = kernel.rates().clone();
    for i in 0..n {
        let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| matrix[(i, j)]).sum();
        matrix[(i, i)] = -row_sum - kappa[i];
    }
    let conservative = kappa.iter().all(|&k| k == 0.0);
    Ok(Generator {
        matrix,
        kappa,
        conservative,
    })
}

/// Jump-type Dirichlet energy `E(u,v)`.
pub fn dirichlet_energy(
    space: &StateSpace,
    kernel: &JumpKernel,
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    let n = space.n();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v.len(),
        });
    }
    let m = space.m();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            total += (u[j] - u[i]) * (v[j] - v[i]) * kernel.rate(i, j) * m[i];
        }
    }
    Ok(0.5 * total)
}

/// Jump-connected components of the kernel (edges where `R_ij > 0`).
pub fn connected_components(kernel: &JumpKernel) -> Vec<usize> {
    let n = kernel.n();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if comp[j] == usize::MAX && (kernel.rate(i, j) > 0.0 || kernel.rate(j, i) > 0.0) {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn two_state_rate_one() -> (StateSpace, JumpKernel) {
        let space = StateSpace::uniform(2);
        let kernel = build_kernel(&space, dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        (space, kernel)
    }

    #[test]
    fn symmetric_rates_equal_masses_are_valid() {
        two_state_rate_one();
    }

    #[test]
    fn detailed_balance_violation_is_reported() {
        let space = StateSpace::new(vec![1.0, 2.0]).unwrap();
        let err = build_kernel(&space, dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap_err();
        match err {
            Error::DetailedBalanceViolation { i, j, .. } => {
                assert_eq!((i, j), (0, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn balanced_asymmetric_rates_are_valid() {
        // m = (1,2), R_12 = 2, R_21 = 1: 1*2 = 2*1.
        let space = StateSpace::new(vec![1.0, 2.0]).unwrap();
        build_kernel(&space, dmatrix![0.0, 2.0; 1.0, 0.0]).unwrap();
    }

    #[test]
    fn negative_rate_rejected() {
        let space = StateSpace::uniform(2);
        assert!(matches!(
            build_kernel(&space, dmatrix![0.0, -1.0; -1.0, 0.0]),
            Err(Error::NegativeRate { .. })
        ));
    }

    #[test]
    fn generator_structure_conservative() {
        let (space, kernel) = two_state_rate_one();
        let gen = build_generator(&space, &kernel, vec![0.0, 0.0]).unwrap();
        assert!(gen.conservative());
        assert_eq!(gen.matrix(), &dmatrix![-1.0, 1.0; 1.0, -1.0]);
    }

    #[test]
    fn generator_with_killing() {
        let (space, kernel) = two_state_rate_one();
        let gen = build_generator(&space, &kernel, vec![0.5, 0.0]).unwrap();
        assert!(!gen.conservative());
        assert_eq!(gen.matrix(), &dmatrix![-1.5, 1.0; 1.0, -1.0]);
    }

    #[test]
    fn brown_two_state_generator() {
        // alpha_1 = 1/(1 + cot(pi/8)) = 1 - sqrt(2)/2
        let alpha = 1.0 / (1.0 + 1.0 / (std::f64::consts::PI / 8.0).tan());
        assert!((alpha - (1.0 - 2f64.sqrt() / 2.0)).abs() < 1e-15);
        let space = StateSpace::uniform(2);
        let kernel = build_kernel(&space, dmatrix![0.0, alpha; alpha, 0.0]).unwrap();
        let gen = build_generator(&space, &kernel, vec![0.0, 0.0]).unwrap();
        assert!((gen.matrix()[(0, 0)] + alpha).abs() < 1e-15);
    }

    #[test]
    fn negative_killing_rejected() {
        let (space, kernel) = two_state_rate_one();
        assert!(matches!(
            build_generator(&space, &kernel, vec![-0.1, 0.0]),
            Err(Error::NegativeKilling { i: 0, .. })
        ));
    }

    #[test]
    fn energy_of_constant_vanishes() {
        let (space, kernel) = two_state_rate_one();
        let u = vec![3.0, 3.0];
        assert_eq!(dirichlet_energy(&space, &kernel, &u, &u).unwrap(), 0.0);
    }

    #[test]
    fn energy_two_state_step() {
        let (space, kernel) = two_state_rate_one();
        let u = vec![0.0, 1.0];
        assert!((dirichlet_energy(&space, &kernel, &u, &u).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn energy_matches_summation_by_parts() {
        // E(u,v) = -Σ_i (Au)_i v_i m_i on a conservative chain.
        let space = StateSpace::new(vec![1.0, 2.0, 0.5]).unwrap();
        let kernel = build_kernel(
            &space,
            dmatrix![0.0, 2.0, 0.25; 1.0, 0.0, 0.5; 0.5, 2.0, 0.0],
        )
        .unwrap();
        let gen = build_generator(&space, &kernel, vec![0.0; 3]).unwrap();
        let u = vec![0.3, -1.2, 2.0];
        let v = vec![1.0, 0.5, -0.7];
        let energy = dirichlet_energy(&space, &kernel, &u, &v).unwrap();
        let au = gen.apply(&u).unwrap();
        let parts: f64 = -space.inner(&au, &v);
        assert!((energy - parts).abs() <= 1e-12 * energy.abs().max(1.0));
    }

    #[test]
    fn components_found() {
        let space = StateSpace::uniform(4);
        let kernel = build_kernel(
            &space,
            dmatrix![
                0.0, 1.0, 0.0, 0.0;
                1.0, 0.0, 0.0, 0.0;
                0.0, 0.0, 0.0, 2.0;
                0.0, 0.0, 2.0, 0.0
            ],
        )
        .unwrap();
        assert_eq!(connected_components(&kernel), vec![0, 0, 1, 1]);
    }
}
