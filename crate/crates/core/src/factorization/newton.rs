//! Newton updates of single rows of `U` and single columns of `V`.
//!
//! Both are the same block problem: minimize over `x` (length `l`)
//! `sum_j exp(x . B_j) - y_j (x . B_j)`, where the basis `B` is `V` for a row
//! of `U` and `U^T` for a column of `V`. The Newton system
//! `(B diag(exp) B^T + cond I) step = B (exp - y)` is solved by Cholesky.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{NlpcaError, Result};
use crate::factorization::objective::{check_conformal, exp_product, guarded_exp};

/// Maximum number of step halvings of the optional loss guard.
pub const GUARD_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Tikhonov (ridge) term added to the Hessian diagonal.
    pub cond: f64,
    /// Halve the step while the block loss increases.
    pub guard: bool,
}

impl NewtonOptions {
    pub fn new(cond: f64) -> Self {
        NewtonOptions { cond, guard: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockUpdate {
    pub clamps: usize,
    pub halvings: usize,
}

/// Solves `h x = g` for symmetric positive definite `h`.
pub(crate) fn spd_solve(h: &Array2<f64>, g: &Array1<f64>, context: &str) -> Result<Array1<f64>> {
    let l = g.len();
    let hm = DMatrix::from_fn(l, l, |a, b| h[[a, b]]);
    let chol = hm
        .cholesky()
        .ok_or_else(|| NlpcaError::numeric(context, "system is not positive definite"))?;
    let scale = (0..l).map(|a| h[[a, a]].abs()).fold(0.0, f64::max);
    let pivot = chol.l_dirty().diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    if !(pivot > scale * l as f64 * f64::EPSILON) {
        return Err(NlpcaError::numeric(context, "system is numerically singular"));
    }
    let x = chol.solve(&DVector::from_iterator(l, g.iter().copied()));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NlpcaError::numeric(context, "non-finite Newton step"));
    }
    Ok(Array1::from_iter(x.iter().copied()))
}

fn block_objective(x: ArrayView1<f64>, basis: ArrayView2<f64>, y: ArrayView1<f64>, clamps: &mut usize) -> f64 {
    x.dot(&basis)
        .iter()
        .zip(y)
        .map(|(&t, &obs)| guarded_exp(t, clamps) - obs * t)
        .sum()
}

/// One Newton step for the block problem; returns the new block and statistics.
fn newton_block(x: ArrayView1<f64>, basis: ArrayView2<f64>, y: ArrayView1<f64>, opts: &NewtonOptions, context: &str) -> Result<(Array1<f64>, BlockUpdate)> {
    let mut stats = BlockUpdate::default();
    let theta = x.dot(&basis);
    let e = theta.mapv(|t| guarded_exp(t, &mut stats.clamps));
    let residual = &e - &y;
    let grad = basis.dot(&residual);
    let weighted = &basis * &e;
    let mut hess = weighted.dot(&basis.t());
    for a in 0..hess.nrows() {
        hess[[a, a]] += opts.cond;
    }
    let step = spd_solve(&hess, &grad, context)?;
    let mut next = &x - &step;
    if opts.guard {
        let before = block_objective(x, basis, y, &mut stats.clamps);
        let mut scale = 1.0;
        while block_objective(next.view(), basis, y, &mut stats.clamps) > before && stats.halvings < GUARD_HALVINGS {
            scale *= 0.5;
            stats.halvings += 1;
            next = &x - &(&step * scale);
        }
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(NlpcaError::numeric(context, "non-finite update"));
    }
    Ok((next, stats))
}

/// Newton update of row `i` of `U` with `V` fixed; only that row changes.
pub fn newton_update_row_u(u: &mut Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>, i: usize, opts: &NewtonOptions) -> Result<BlockUpdate> {
    check_conformal(u, v, y)?;
    let (row, stats) = newton_block(u.row(i), v.view(), y.row(i), opts, &format!("row {i} of U"))?;
    u.row_mut(i).assign(&row);
    Ok(stats)
}

/// Newton update of column `j` of `V` with `U` fixed; only that column changes.
pub fn newton_update_col_v(u: &Array2<f64>, v: &mut Array2<f64>, y: ArrayView2<f64>, j: usize, opts: &NewtonOptions) -> Result<BlockUpdate> {
    check_conformal(u, v, y)?;
    let (col, stats) = newton_block(v.column(j), u.t(), y.column(j), opts, &format!("column {j} of V"))?;
    v.column_mut(j).assign(&col);
    Ok(stats)
}

/// Diagonal-Hessian Newton update of column `k` of `U`:
/// `U[:,k] -= D_k^{-1} (exp(UV) - Y) V[k,:]^T` with
/// `D_k = diag(sum_j exp(UV)_{m,j} V_{k,j}^2)`.
///
/// Kept to cross-check the block updates; the pipeline does not use it.
pub fn newton_update_col_u_coordinate(u: &mut Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>, k: usize) -> Result<BlockUpdate> {
    check_conformal(u, v, y)?;
    let (e, clamps) = exp_product(u, v);
    let vk = v.row(k);
    let vk2 = vk.mapv(|x| x * x);
    let diag = e.dot(&vk2);
    let grad = (&e - &y).dot(&vk);
    if let Some(m) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(NlpcaError::numeric(format!("column {k} of U"), format!("zero curvature at row {m}")));
    }
    let mut col = u.column_mut(k);
    col.zip_mut_with(&(&grad / &diag), |x, s| *x -= s);
    Ok(BlockUpdate { clamps, halvings: 0 })
}
