//! Symmetric pure-jump Dirichlet forms on finite state spaces.
//!
//! The library realizes a finite-state jump process through its rate matrix
//! and reference measure, evaluates the semigroup spectrally, and computes
//! the Littlewood-Paley square functions G, G̃, H, H̃ together with the
//! identities that tie them to the Dirichlet energy: the Hardy-Stein
//! identity, the carré du champ formulas, and the sharp-bracket formula for
//! the parabolic martingale. The `brown` module builds the explicit chain
//! family on which the ratio ‖G̃‖_p/‖f‖_p grows without bound for p > 2.

pub mod bregman;
pub mod brown;
pub mod chainfile;
pub mod mc;
pub mod model;
pub mod quad;
pub mod spectral;
pub mod squarefn;
pub mod verify;

use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("detailed balance violated at pair ({i},{j}): m_i R_ij = {lhs}, m_j R_ji = {rhs}, relative residual {residual:e}")]
    DetailedBalanceViolation {
        i: usize,
        j: usize,
        lhs: f64,
        rhs: f64,
        residual: f64,
    },
    #[error("negative jump rate at ({i},{j}): {value}")]
    NegativeRate { i: usize, j: usize, value: f64 },
    #[error("negative killing rate at state {i}: {value}")]
    NegativeKilling { i: usize, value: f64 },
    #[error("generator is not m-symmetric: residual {residual:e}")]
    NonSymmetric { residual: f64 },
    #[error("eigenvalue solver failed")]
    EigSolverFailure,
    #[error("negative time {t}")]
    NegativeTime { t: f64 },
    #[error("operation requires a conservative chain")]
    NotConservative,
    #[error("time integral diverges: zero-mode component has nonzero jump differences (strong stability fails)")]
    DivergentIntegral,
    #[error("quadrature tolerance not met: achieved {achieved:e}, requested {requested:e}")]
    ToleranceNotMet { achieved: f64, requested: f64 },
    #[error("bad norm exponent {p}; need p >= 1")]
    BadExponent { p: f64 },
    #[error("time grid must contain t = 0")]
    GridTooCoarse,
    #[error("comparability ratio undefined for a = b")]
    DegeneratePair,
    #[error("bad finite-difference window: t = {t}, T = {big_t}, h = {h}")]
    BadWindow { t: f64, big_t: f64, h: f64 },
    #[error("scan hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
