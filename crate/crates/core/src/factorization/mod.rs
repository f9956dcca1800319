//! Exponential-family low-rank factorization `Y ~ exp(U V)` of a patch matrix.
//!
//! `U` (M x l) holds per-patch coefficients and the rows of `V` (l x N) are
//! dictionary atoms, both in the natural-parameter (log-intensity) domain.
//! The Gaussian mode fits `Y ~ U V` under squared loss instead.

mod gaussian;
mod newton;
mod objective;
mod solver;
mod sparse;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NlpcaError, Result};

pub use gaussian::{gaussian_update_col_v, gaussian_update_row_u};
pub use newton::{
    newton_update_col_u_coordinate, newton_update_col_v, newton_update_row_u, BlockUpdate, NewtonOptions,
    GUARD_HALVINGS,
};
pub use objective::{
    biconvexity_witness, estimate, estimate_counted, exp_product, gaussian_loss, grad_u, grad_v, l1_norm, loss,
    loss_counted, penalized_loss, scalar_joint_hessian, EXP_CLAMP,
};
pub use solver::{factorize, factorize_from, init_factors, Diagnostics, IterationRecord, SpiralLog, SPIRAL_ROW_TOL};
pub use sparse::{
    penalized_row_objective, soft_threshold, soft_threshold_scalar, spiral_step, spiral_update_row_u, SpiralOutcome,
    SpiralState, ALPHA_MAX, ALPHA_MIN, MAX_DOUBLINGS,
};

/// Coefficients `u` (M x l) and dictionary `v` (l x N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl FactorPair {
    pub fn new(u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if u.ncols() != v.nrows() {
            return Err(NlpcaError::shape(format!("U {:?} and V {:?} disagree on rank", u.dim(), v.dim())));
        }
        Ok(FactorPair { u, v })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    #[cfg(test)]
    pub(crate) fn random_for_test(m: usize, l: usize, n: usize, rng: &mut crate::rng::Rng) -> Self {
        let u = Array2::from_shape_fn((m, l), |_| rng.uniform() * 2.0 - 1.0);
        let v = Array2::from_shape_fn((l, n), |_| rng.uniform() * 2.0 - 1.0);
        FactorPair { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// Newton row and column updates on the Poisson loss.
    PoissonNlpca,
    /// l1-penalized coefficients (proximal steps), Newton dictionary updates.
    PoissonNlspca,
    /// Squared loss, for Anscombe-transformed data.
    GaussianPca,
}

/// Weight of the l1 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    Fixed(f64),
    /// `factor * sqrt(ln(M_k) / N)` for a cluster of `M_k` patches of `N` pixels.
    Scaled(f64),
}

impl Lambda {
    pub fn resolve(&self, rows: usize, cols: usize) -> f64 {
        match *self {
            Lambda::Fixed(v) => v,
            Lambda::Scaled(factor) => factor * ((rows.max(1) as f64).ln() / cols.max(1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of atoms `l`.
    pub rank: usize,
    /// Maximum number of outer (U sweep, V sweep) iterations.
    pub max_iter: usize,
    /// Stop once the relative change of the estimate falls below this.
    pub stop_tol: f64,
    /// Ridge term of the Newton systems.
    pub cond: f64,
    pub lambda: Lambda,
    pub mode: SolverMode,
    /// Halve Newton steps that increase the block loss.
    pub guard: bool,
    /// Maximum proximal steps per row and outer iteration (sparse mode).
    pub spiral_steps: usize,
    /// Keep every (before, after) pair of accepted proximal updates.
    pub record_spiral_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rank: 4,
            max_iter: 20,
            stop_tol: 1e-1,
            cond: 1e-3,
            lambda: Lambda::Scaled(70.0),
            mode: SolverMode::PoissonNlpca,
            guard: false,
            spiral_steps: 5,
            record_spiral_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(NlpcaError::invalid("rank must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(NlpcaError::invalid("iteration limit must be at least 1"));
        }
        if !(self.stop_tol > 0.0) {
            return Err(NlpcaError::invalid("stopping tolerance must be positive"));
        }
        if !(self.cond >= 0.0) {
            return Err(NlpcaError::invalid("conditioning parameter must be nonnegative"));
        }
        let lambda_ok = match self.lambda {
            Lambda::Fixed(v) | Lambda::Scaled(v) => v >= 0.0 && v.is_finite(),
        };
        if !lambda_ok {
            return Err(NlpcaError::invalid("lambda must be nonnegative"));
        }
        if self.spiral_steps == 0 {
            return Err(NlpcaError::invalid("spiral_steps must be at least 1"));
        }
        Ok(())
    }
}
