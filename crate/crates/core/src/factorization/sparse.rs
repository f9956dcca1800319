//! l1-penalized coefficient updates: soft thresholding and SPIRAL-style
//! proximal gradient steps on single rows of `U`.
//!
//! For row `i` the smooth part is `f(u) = <exp(uV), 1> - <uV, Y_i>` with
//! gradient `(exp(uV) - Y_i) V^T`. A step takes `gamma = u - grad / alpha` and
//! returns `soft_threshold(gamma, lambda / alpha)`.
//!
//! Step selection: `alpha` starts from the Barzilai-Borwein ratio
//! `|dg|^2 / (du . dg)` of the previous step held in [`SpiralState`], clamped
//! to `[ALPHA_MIN, ALPHA_MAX]` (1 when there is no usable history), and is
//! doubled until `f(u) + lambda |u|_1` does not increase. After
//! `MAX_DOUBLINGS` failed doublings the row is left unchanged and the update
//! is reported as stalled.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{NlpcaError, Result};
use crate::factorization::objective::{check_conformal, guarded_exp};

pub const ALPHA_MIN: f64 = 1e-8;
pub const ALPHA_MAX: f64 = 1e8;
pub const MAX_DOUBLINGS: usize = 30;

/// `sign(x) * max(|x| - tau, 0)`.
pub fn soft_threshold_scalar(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Elementwise soft thresholding.
pub fn soft_threshold(x: ArrayView1<f64>, tau: f64) -> Result<Array1<f64>> {
    if !(tau >= 0.0) {
        return Err(NlpcaError::invalid(format!("threshold must be nonnegative, got {tau}")));
    }
    Ok(x.mapv(|v| soft_threshold_scalar(v, tau)))
}

/// One proximal gradient step with a fixed `alpha`.
pub fn spiral_step(row: ArrayView1<f64>, grad: ArrayView1<f64>, alpha: f64, lambda: f64) -> Array1<f64> {
    let tau = lambda / alpha;
    row.iter()
        .zip(grad)
        .map(|(u, g)| soft_threshold_scalar(u - g / alpha, tau))
        .collect()
}

/// Secant history of one row.
#[derive(Debug, Clone, Default)]
pub struct SpiralState {
    previous: Option<(Array1<f64>, Array1<f64>)>,
}

impl SpiralState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Initial `alpha` for a step at `row` with gradient `grad`.
    pub fn initial_alpha(&self, row: ArrayView1<f64>, grad: ArrayView1<f64>) -> f64 {
        let Some((prev_row, prev_grad)) = &self.previous else {
            return 1.0;
        };
        let du = &row - prev_row;
        let dg = &grad - prev_grad;
        let curvature = du.dot(&dg);
        if curvature > 0.0 && curvature.is_finite() {
            (dg.dot(&dg) / curvature).clamp(ALPHA_MIN, ALPHA_MAX)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpiralOutcome {
    /// Penalized row objective before the update.
    pub objective_before: f64,
    /// Penalized row objective of the returned row.
    pub objective_after: f64,
    /// Accepted `alpha` (the last one tried on a stall).
    pub alpha: f64,
    pub doublings: usize,
    pub stalled: bool,
    pub clamps: usize,
}

/// Gradient of the smooth row objective, `sum_j (exp(uV)_j - y_j) V[k, j]`
/// accumulated in increasing `j`.
fn row_gradient(row: ArrayView1<f64>, v: &Array2<f64>, y: ArrayView1<f64>, clamps: &mut usize) -> Array1<f64> {
    let residual: Vec<f64> = row.dot(v).iter().zip(y).map(|(&t, &o)| guarded_exp(t, clamps) - o).collect();
    v.outer_iter()
        .map(|atom| atom.iter().zip(&residual).fold(0.0, |acc, (&a, &r)| acc + r * a))
        .collect()
}

/// `f(u) + lambda |u|_1` for one row.
pub fn penalized_row_objective(row: ArrayView1<f64>, v: &Array2<f64>, y: ArrayView1<f64>, lambda: f64) -> f64 {
    let mut clamps = 0;
    let theta = row.dot(v);
    let smooth: f64 = theta.iter().zip(y).map(|(&t, &o)| guarded_exp(t, &mut clamps) - o * t).sum();
    smooth + lambda * row.iter().map(|x| x.abs()).sum::<f64>()
}

/// SPIRAL update of row `i` of `U`.
pub fn spiral_update_row_u(
    u: &mut Array2<f64>,
    v: &Array2<f64>,
    y: ArrayView2<f64>,
    i: usize,
    lambda: f64,
    state: &mut SpiralState,
) -> Result<SpiralOutcome> {
    check_conformal(u, v, y)?;
    if !(lambda >= 0.0) {
        return Err(NlpcaError::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    let mut clamps = 0;
    let row = u.row(i).to_owned();
    let y_row = y.row(i);
    let grad = row_gradient(row.view(), v, y_row, &mut clamps);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(NlpcaError::numeric(format!("row {i} of U"), "non-finite gradient"));
    }
    let before = penalized_row_objective(row.view(), v, y_row, lambda);
    let mut alpha = state.initial_alpha(row.view(), grad.view());
    state.previous = Some((row.clone(), grad.clone()));

    for doublings in 0..=MAX_DOUBLINGS {
        let candidate = spiral_step(row.view(), grad.view(), alpha, lambda);
        let after = penalized_row_objective(candidate.view(), v, y_row, lambda);
        if after <= before {
            u.row_mut(i).assign(&candidate);
            return Ok(SpiralOutcome {
                objective_before: before,
                objective_after: after,
                alpha,
                doublings,
                stalled: false,
                clamps,
            });
        }
        if doublings < MAX_DOUBLINGS {
            alpha *= 2.0;
        }
    }
    Ok(SpiralOutcome {
        objective_before: before,
        objective_after: before,
        alpha,
        doublings: MAX_DOUBLINGS,
        stalled: true,
        clamps,
    })
}
