//! Poisson and Gaussian losses, gradients and the intensity estimate.

use ndarray::{Array2, ArrayView2};

use crate::error::{NlpcaError, Result};
use crate::factorization::FactorPair;

/// Natural parameters above this value are clamped before exponentiation.
pub const EXP_CLAMP: f64 = 700.0;

/// `exp(min(x, EXP_CLAMP))`, counting clamps.
#[inline]
pub(crate) fn guarded_exp(x: f64, clamps: &mut usize) -> f64 {
    if x > EXP_CLAMP {
        *clamps += 1;
        EXP_CLAMP.exp()
    } else {
        x.exp()
    }
}

pub(crate) fn check_conformal(u: &Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>) -> Result<()> {
    if u.ncols() != v.nrows() || u.nrows() != y.nrows() || v.ncols() != y.ncols() {
        return Err(NlpcaError::shape(format!(
            "U {:?}, V {:?} and Y {:?} are not conformal",
            u.dim(),
            v.dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// `exp(UV)` elementwise together with the number of clamped entries.
pub fn exp_product(u: &Array2<f64>, v: &Array2<f64>) -> (Array2<f64>, usize) {
    let mut clamps = 0;
    let e = u.dot(v).mapv_into(|x| guarded_exp(x, &mut clamps));
    (e, clamps)
}

/// Poisson loss `sum exp(UV) - Y (UV)` and the number of clamped exponentials.
pub fn loss_counted(u: &Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>) -> Result<(f64, usize)> {
    check_conformal(u, v, y)?;
    let theta = u.dot(v);
    let mut clamps = 0;
    let total = theta
        .iter()
        .zip(y.iter())
        .map(|(&t, &obs)| guarded_exp(t, &mut clamps) - obs * t)
        .sum();
    Ok((total, clamps))
}

/// Poisson negative log-likelihood of `Y` under intensities `exp(UV)`, without
/// the `log(Y!)` constant.
pub fn loss(u: &Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    loss_counted(u, v, y).map(|(l, _)| l)
}

/// Entrywise l1 norm of the coefficients.
pub fn l1_norm(u: &Array2<f64>) -> f64 {
    u.iter().map(|x| x.abs()).sum()
}

/// `loss + lambda * sum |U_ij|`.
pub fn penalized_loss(u: &Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(NlpcaError::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(loss(u, v, y)? + lambda * l1_norm(u))
}

/// Squared loss `sum ((UV) - Y)^2` used for Gaussian (Anscombe-domain) PCA.
pub fn gaussian_loss(u: &Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    check_conformal(u, v, y)?;
    Ok(u.dot(v).iter().zip(y.iter()).map(|(t, o)| (t - o) * (t - o)).sum())
}

/// `(exp(UV) - Y) V^T`
pub fn grad_u(u: &Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_conformal(u, v, y)?;
    let (e, _) = exp_product(u, v);
    Ok((e - &y).dot(&v.t()))
}

/// `U^T (exp(UV) - Y)`
pub fn grad_v(u: &Array2<f64>, v: &Array2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_conformal(u, v, y)?;
    let (e, _) = exp_product(u, v);
    Ok(u.t().dot(&(e - &y)))
}

/// Intensity estimate `exp(UV)`; strictly positive for finite factors.
pub fn estimate(pair: &FactorPair) -> Result<Array2<f64>> {
    estimate_counted(pair).map(|(e, _)| e)
}

pub fn estimate_counted(pair: &FactorPair) -> Result<(Array2<f64>, usize)> {
    if pair.u.ncols() != pair.v.nrows() {
        return Err(NlpcaError::shape(format!("U {:?} and V {:?}", pair.u.dim(), pair.v.dim())));
    }
    if !pair.is_finite() {
        return Err(NlpcaError::numeric("estimate", "non-finite factor entries"));
    }
    Ok(exp_product(&pair.u, &pair.v))
}

/// Joint Hessian of the scalar loss `exp(uv) - y uv` with respect to `(u, v)`.
pub fn scalar_joint_hessian(u: f64, v: f64, y: f64) -> [[f64; 2]; 2] {
    let e = (u * v).exp();
    let off = u * v * e + e - y;
    [[v * v * e, off], [off, u * u * e]]
}

/// The joint Hessian at the origin for `Y = 0`, which has eigenvalues -1 and 1:
/// the loss is convex in each factor separately but not jointly.
pub fn biconvexity_witness() -> [[f64; 2]; 2] {
    scalar_joint_hessian(0.0, 0.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use ndarray::{arr2, Array2};

    fn random(m: usize, n: usize, rng: &mut Rng, lo: f64, hi: f64) -> Array2<f64> {
        Array2::from_shape_fn((m, n), |_| lo + (hi - lo) * rng.uniform())
    }

    /// Independent elementwise evaluation of the Poisson loss.
    fn brute_loss(u: &Array2<f64>, v: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let mut total = 0.0;
        for i in 0..u.nrows() {
            for j in 0..v.ncols() {
                let mut t = 0.0;
                for k in 0..u.ncols() {
                    t += u[[i, k]] * v[[k, j]];
                }
                total += t.exp() - y[[i, j]] * t;
            }
        }
        total
    }

    #[test]
    fn loss_examples() {
        let zero = Array2::zeros((1, 1));
        assert_eq!(loss(&zero, &zero, arr2(&[[5.0]]).view()).unwrap(), 1.0);

        // U = log Y (rank 1 with V = 1): minimum value sum(Y - Y log Y)
        let y = arr2(&[[2.0, 3.0, 0.5]]);
        let u = arr2(&[[1.0]]);
        let v = y.mapv(f64::ln);
        let expected: f64 = y.iter().map(|y| y - y * y.ln()).sum();
        assert!((loss(&u, &v, y.view()).unwrap() - expected).abs() < 1e-12);

        let mut rng = Rng::new(9);
        let (u, v) = (random(3, 2, &mut rng, -1.0, 1.0), random(2, 4, &mut rng, -1.0, 1.0));
        let y = Array2::from_shape_fn((3, 4), |_| rng.poisson(2.0) as f64);
        let (l, b) = (loss(&u, &v, y.view()).unwrap(), brute_loss(&u, &v, &y));
        assert!((l - b).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn penalized_loss_examples() {
        let mut rng = Rng::new(4);
        let (u, v) = (random(3, 2, &mut rng, -1.0, 1.0), random(2, 4, &mut rng, -1.0, 1.0));
        let y = Array2::from_shape_fn((3, 4), |_| rng.poisson(2.0) as f64);
        let base = loss(&u, &v, y.view()).unwrap();
        assert_eq!(penalized_loss(&u, &v, y.view(), 0.0).unwrap(), base);
        let abs_sum: f64 = u.iter().map(|x| x.abs()).sum();
        assert!((penalized_loss(&u, &v, y.view(), 2.5).unwrap() - (base + 2.5 * abs_sum)).abs() < 1e-12);
        let zero = Array2::zeros((3, 2));
        assert_eq!(
            penalized_loss(&zero, &v, y.view(), 100.0).unwrap(),
            loss(&zero, &v, y.view()).unwrap()
        );
        assert!(penalized_loss(&u, &v, y.view(), -1.0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let u = Array2::zeros((2, 2));
        let v = Array2::zeros((3, 4));
        assert!(loss(&u, &v, Array2::zeros((2, 4)).view()).is_err());
        assert!(grad_u(&u, &Array2::zeros((2, 4)), Array2::zeros((3, 4)).view()).is_err());
    }

    #[test]
    fn overflow_is_clamped_and_counted() {
        let u = arr2(&[[1000.0]]);
        let v = arr2(&[[1.0, -1.0]]);
        let (l, clamps) = loss_counted(&u, &v, arr2(&[[0.0, 0.0]]).view()).unwrap();
        assert_eq!(clamps, 1);
        assert!(l.is_finite());
    }

    #[test]
    fn gradient_examples() {
        // stationary point
        let y = arr2(&[[2.0, 3.0]]);
        let u = arr2(&[[1.0]]);
        let v = y.mapv(f64::ln);
        assert!(grad_u(&u, &v, y.view()).unwrap().iter().all(|g| g.abs() < 1e-12));
        assert!(grad_v(&u, &v, y.view()).unwrap().iter().all(|g| g.abs() < 1e-12));
        // scalar hand evaluation: (e^0 - 2) * 1 = -1
        let g = grad_u(&arr2(&[[0.0]]), &arr2(&[[1.0]]), arr2(&[[2.0]]).view()).unwrap();
        assert_eq!(g[[0, 0]], -1.0);
    }

    #[test]
    fn estimate_examples() {
        let pair = FactorPair::new(Array2::zeros((2, 2)), arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])).unwrap();
        assert!(estimate(&pair).unwrap().iter().all(|&x| x == 1.0));
        let pair = FactorPair::new(arr2(&[[1.0]]), arr2(&[[3f64.ln()]])).unwrap();
        assert!((estimate(&pair).unwrap()[[0, 0]] - 3.0).abs() < 1e-15);

        let mut rng = Rng::new(2);
        let pair = FactorPair::new(random(3, 2, &mut rng, -3.0, 3.0), random(2, 5, &mut rng, -3.0, 3.0)).unwrap();
        let e = estimate(&pair).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let t: f64 = (0..2).map(|k| pair.u[[i, k]] * pair.v[[k, j]]).sum();
                assert!((e[[i, j]] - t.exp()).abs() <= 1e-13 * t.exp());
                assert!(e[[i, j]] > 0.0);
            }
        }
    }

    #[test]
    fn witness_matrix() {
        assert_eq!(biconvexity_witness(), [[0.0, 1.0], [1.0, 0.0]]);
        // partial second derivatives are zero (nonnegative) at the origin
        let h = biconvexity_witness();
        assert!(h[0][0] >= 0.0 && h[1][1] >= 0.0);
    }

    #[test]
    fn scale_indeterminacy() {
        let mut rng = Rng::new(8);
        let u = random(4, 1, &mut rng, -1.0, 1.0);
        let v = random(1, 3, &mut rng, -1.0, 1.0);
        let y = Array2::from_shape_fn((4, 3), |_| rng.poisson(1.0) as f64);
        // c = 2 keeps products exact in binary floating point
        let c = 2.0;
        let (us, vs) = (&u * c, &v / c);
        assert_eq!(loss(&u, &v, y.view()).unwrap(), loss(&us, &vs, y.view()).unwrap());
        let a = estimate(&FactorPair::new(u, v).unwrap()).unwrap();
        let b = estimate(&FactorPair::new(us, vs).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
