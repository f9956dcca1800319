//! Squared-loss (classical PCA) counterparts of the Newton updates, used on
//! Anscombe-transformed data.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{NlpcaError, Result};
use crate::factorization::newton::spd_solve;
use crate::factorization::objective::check_conformal;

fn gaussian_block(x: ArrayView1<f64>, basis: ArrayView2<f64>, y: ArrayView1<f64>, cond: f64, context: &str) -> Result<Array1<f64>> {
    let residual = &x.dot(&basis) - &y;
    let grad = basis.dot(&residual);
    let mut gram = basis.dot(&basis.t());
    for a in 0..gram.nrows() {
        gram[[a, a]] += cond;
    }
    let step = spd_solve(&gram, &grad, context).map_err(|e| match e {
        NlpcaError::Numeric { context, message } => NlpcaError::Numeric {
            context,
            message: format!("{message}; use a positive conditioning parameter"),
        },
        other => other,
    })?;
    Ok(&x - &step)
}

/// `U[i,:] -= ((UV)[i,:] - Y[i,:]) V^T (V V^T + cond I)^{-1}`.
///
/// With `cond = 0` this lands on the least-squares fit of row `i`.
pub fn gaussian_update_row_u(u: &mut Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>, i: usize, cond: f64) -> Result<()> {
    check_conformal(u, v, y)?;
    let row = gaussian_block(u.row(i), v.view(), y.row(i), cond, &format!("row {i} of U"))?;
    u.row_mut(i).assign(&row);
    Ok(())
}

/// `V[:,j] -= (U^T U + cond I)^{-1} U^T ((UV)[:,j] - Y[:,j])`.
pub fn gaussian_update_col_v(u: &Array2<f64>, v: &mut Array2<f64>, y: ArrayView2<f64>, j: usize, cond: f64) -> Result<()> {
    check_conformal(u, v, y)?;
    let col = gaussian_block(v.column(j), u.t(), y.column(j), cond, &format!("column {j} of V"))?;
    v.column_mut(j).assign(&col);
    Ok(())
}
