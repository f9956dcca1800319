use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{NlpcaError, Result};
use crate::factorization::gaussian::{gaussian_update_col_v, gaussian_update_row_u};
use crate::factorization::newton::{newton_update_col_v, newton_update_row_u, NewtonOptions};
use crate::factorization::objective::{check_conformal, exp_product, gaussian_loss, l1_norm, loss_counted};
use crate::factorization::sparse::{spiral_update_row_u, SpiralState};
use crate::factorization::{FactorPair, SolverConfig, SolverMode};
use crate::rng::Rng;

/// Inner proximal steps on a row end once the penalized row objective
/// decreases by less than this fraction.
pub const SPIRAL_ROW_TOL: f64 = 1e-6;

/// Per-iteration record of [`factorize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub penalized_loss: f64,
    pub relative_change: f64,
    pub clamps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpiralLog {
    pub updates: usize,
    pub stalls: usize,
    /// Accepted updates whose penalized row objective went up; always 0.
    pub increases: usize,
    /// `(before, after)` objective of every accepted update, when recorded.
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    /// l1 weight actually used (0 outside sparse mode).
    pub lambda: f64,
    pub spiral: SpiralLog,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn final_loss(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.loss)
    }
}

/// Random starting factors.
///
/// `U` has standard normal entries. Rows of `V` are standard normal draws
/// scaled to unit Euclidean norm, and the first row is then replaced by the
/// constant atom `1/sqrt(N)`. Draw order: `U` row-major, then `V` row-major.
pub fn init_factors(m: usize, rank: usize, n: usize, rng: &mut Rng) -> Result<FactorPair> {
    if rank == 0 || m == 0 || n == 0 {
        return Err(NlpcaError::invalid(format!("cannot initialize factors of size {m}x{rank}x{n}")));
    }
    let u = Array2::from_shape_simple_fn((m, rank), || rng.standard_normal());
    let mut v = Array2::from_shape_simple_fn((rank, n), || rng.standard_normal());
    for mut row in v.outer_iter_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    v.row_mut(0).fill(1.0 / (n as f64).sqrt());
    FactorPair::new(u, v)
}

/// Fits factors to one cluster of patches from a random start.
pub fn factorize(y: ArrayView2<f64>, config: &SolverConfig, rng: &mut Rng) -> Result<(FactorPair, Diagnostics)> {
    config.validate()?;
    let init = init_factors(y.nrows(), config.rank, y.ncols(), rng)?;
    factorize_from(y, init, config)
}

/// Mean-domain estimate of the current factors.
fn mean_estimate(pair: &FactorPair, mode: SolverMode) -> (Array2<f64>, usize) {
    match mode {
        SolverMode::GaussianPca => (pair.u.dot(&pair.v), 0),
        _ => exp_product(&pair.u, &pair.v),
    }
}

/// Alternating row sweep of `U` then column sweep of `V`, until the relative
/// change `|F_t - F_{t+1}|^2 / |F_t|^2` of the mean estimate falls below
/// `stop_tol` or `max_iter` iterations have run.
pub fn factorize_from(y: ArrayView2<f64>, init: FactorPair, config: &SolverConfig) -> Result<(FactorPair, Diagnostics)> {
    config.validate()?;
    let FactorPair { mut u, mut v } = init;
    check_conformal(&u, &v, y)?;
    if y.nrows() == 0 {
        return Err(NlpcaError::invalid("cannot factorize an empty cluster"));
    }
    if config.mode != SolverMode::GaussianPca && y.iter().any(|&x| x < 0.0) {
        return Err(NlpcaError::invalid("Poisson factorization needs nonnegative data"));
    }

    let (m, n) = y.dim();
    let rank = u.ncols();
    let mut diag = Diagnostics::default();
    if rank > m.min(n) {
        diag.warnings.push(format!("rank {rank} exceeds min(M, N) = {}", m.min(n)));
    }
    let lambda = match config.mode {
        SolverMode::PoissonNlspca => config.lambda.resolve(m, n),
        _ => 0.0,
    };
    diag.lambda = lambda;
    let newton = NewtonOptions {
        cond: config.cond,
        guard: config.guard,
    };

    let mut previous = mean_estimate(&FactorPair { u: u.clone(), v: v.clone() }, config.mode).0;
    for t in 1..=config.max_iter {
        let mut clamps = 0;
        let ctx = |e: NlpcaError| e.with_context(format!("iteration {t}"));
        match config.mode {
            SolverMode::PoissonNlpca => {
                for i in 0..m {
                    clamps += newton_update_row_u(&mut u, &v, y, i, &newton).map_err(ctx)?.clamps;
                }
            }
            SolverMode::PoissonNlspca => {
                for i in 0..m {
                    let mut state = SpiralState::new();
                    for _ in 0..config.spiral_steps {
                        let out = spiral_update_row_u(&mut u, &v, y, i, lambda, &mut state).map_err(ctx)?;
                        clamps += out.clamps;
                        diag.spiral.updates += 1;
                        if out.stalled {
                            diag.spiral.stalls += 1;
                            break;
                        }
                        if out.objective_after > out.objective_before {
                            diag.spiral.increases += 1;
                        }
                        if config.record_spiral_trace {
                            diag.spiral.trace.push((out.objective_before, out.objective_after));
                        }
                        if out.objective_before - out.objective_after <= SPIRAL_ROW_TOL * out.objective_before.abs() {
                            break;
                        }
                    }
                }
            }
            SolverMode::GaussianPca => {
                for i in 0..m {
                    gaussian_update_row_u(&mut u, &v, y, i, config.cond).map_err(ctx)?;
                }
            }
        }
        for j in 0..n {
            match config.mode {
                SolverMode::GaussianPca => gaussian_update_col_v(&u, &mut v, y, j, config.cond).map_err(ctx)?,
                _ => clamps += newton_update_col_v(&u, &mut v, y, j, &newton).map_err(ctx)?.clamps,
            }
        }

        let pair = FactorPair { u, v };
        let (current, est_clamps) = mean_estimate(&pair, config.mode);
        let (loss, loss_clamps) = match config.mode {
            SolverMode::GaussianPca => (gaussian_loss(&pair.u, &pair.v, y)?, 0),
            _ => loss_counted(&pair.u, &pair.v, y)?,
        };
        if !loss.is_finite() || !pair.is_finite() {
            return Err(NlpcaError::numeric(format!("iteration {t}"), "non-finite factors or loss"));
        }
        let denom: f64 = previous.iter().map(|x| x * x).sum();
        let num: f64 = previous.iter().zip(current.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let relative_change = if denom > 0.0 { num / denom } else if num == 0.0 { 0.0 } else { f64::INFINITY };
        diag.iterations.push(IterationRecord {
            iteration: t,
            loss,
            penalized_loss: loss + lambda * l1_norm(&pair.u),
            relative_change,
            clamps: clamps + est_clamps + loss_clamps,
        });
        FactorPair { u, v } = pair;
        previous = current;
        if relative_change < config.stop_tol {
            diag.converged = true;
            break;
        }
    }
    Ok((FactorPair { u, v }, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::{estimate, grad_u, grad_v, loss, Lambda};
    use ndarray::arr2;

    #[test]
    fn init_has_unit_atoms_and_constant_first_atom() {
        let pair = init_factors(7, 3, 25, &mut Rng::new(1)).unwrap();
        for row in pair.v.outer_iter() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
        assert!(pair.v.row(0).iter().all(|&x| x == 1.0 / 5.0));
        assert_eq!(pair, init_factors(7, 3, 25, &mut Rng::new(1)).unwrap());
        assert_ne!(pair, init_factors(7, 3, 25, &mut Rng::new(2)).unwrap());
    }

    #[test]
    fn fixed_point_stops_after_one_iteration() {
        let mut rng = Rng::new(4);
        let pair = FactorPair::random_for_test(6, 2, 5, &mut rng);
        let y = estimate(&pair).unwrap();
        let (out, diag) = factorize_from(y.view(), pair.clone(), &SolverConfig { rank: 2, ..Default::default() }).unwrap();
        assert_eq!(diag.iterations.len(), 1);
        assert!(diag.converged);
        for (a, b) in out.u.iter().chain(out.v.iter()).zip(pair.u.iter().chain(pair.v.iter())) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    /// Long plain gradient descent on (u, v) for the rank-1 problem.
    fn gradient_descent_oracle(y: &Array2<f64>, start: &FactorPair) -> f64 {
        let (mut u, mut v) = (start.u.clone(), start.v.clone());
        let step = 2e-3;
        for _ in 0..400_000 {
            let gu = grad_u(&u, &v, y.view()).unwrap();
            let gv = grad_v(&u, &v, y.view()).unwrap();
            u = u - &gu * step;
            v = v - &gv * step;
        }
        loss(&u, &v, y.view()).unwrap()
    }

    #[test]
    fn rank_one_recovery_matches_descent_oracle() {
        let mut rng = Rng::new(17);
        let u_true = Array2::from_shape_fn((8, 1), |_| 1.0 + 0.5 * rng.uniform());
        let v_true = Array2::from_shape_fn((1, 8), |_| 0.8 * rng.uniform());
        let y = exp_product(&u_true, &v_true).0;
        // Exact optimum: exp(UV) = Y.
        let optimum: f64 = y.iter().map(|y| y - y * y.ln()).sum();

        let config = SolverConfig {
            rank: 1,
            max_iter: 200,
            stop_tol: 1e-300,
            cond: 0.0,
            ..Default::default()
        };
        let start = init_factors(8, 1, 8, &mut Rng::new(3)).unwrap();
        let (pair, _) = factorize_from(y.view(), start.clone(), &config).unwrap();
        let fitted = loss(&pair.u, &pair.v, y.view()).unwrap();
        let oracle = gradient_descent_oracle(&y, &start);
        assert!((oracle - optimum).abs() < 1e-6, "oracle {oracle} vs optimum {optimum}");
        assert!((fitted - oracle).abs() < 1e-6, "fitted {fitted} vs oracle {oracle}");
    }

    #[test]
    fn single_patch_reaches_stationarity() {
        let y = arr2(&[[3.0, 1.0, 0.0, 2.0, 5.0]]);
        let config = SolverConfig {
            rank: 1,
            max_iter: 100,
            stop_tol: 1e-300,
            ..Default::default()
        };
        let (pair, _) = factorize(y.view(), &config, &mut Rng::new(2)).unwrap();
        let gu = grad_u(&pair.u, &pair.v, y.view()).unwrap();
        let gv = grad_v(&pair.u, &pair.v, y.view()).unwrap();
        assert!(gu.iter().chain(gv.iter()).all(|g| g.abs() < 1e-2), "{gu:?} {gv:?}");
    }

    #[test]
    fn sparse_mode_reports_lambda_and_never_increases() {
        let mut rng = Rng::new(8);
        let y = Array2::from_shape_fn((30, 16), |(i, _)| rng.poisson(if i < 15 { 0.5 } else { 3.0 }) as f64);
        let config = SolverConfig {
            rank: 2,
            mode: SolverMode::PoissonNlspca,
            record_spiral_trace: true,
            spiral_steps: 3,
            ..Default::default()
        };
        let (_, diag) = factorize(y.view(), &config, &mut Rng::new(1)).unwrap();
        let expected = 70.0 * (30f64.ln() / 16.0).sqrt();
        assert!((diag.lambda - expected).abs() < 1e-12);
        assert_eq!(diag.spiral.increases, 0);
        assert!(diag.spiral.trace.iter().all(|(b, a)| a <= b));
        assert_eq!(Lambda::Fixed(3.0).resolve(30, 16), 3.0);
    }

    #[test]
    fn gaussian_mode_decreases_squared_loss() {
        let mut rng = Rng::new(6);
        let y = Array2::from_shape_fn((20, 9), |_| 1.0 + rng.uniform());
        let config = SolverConfig {
            rank: 2,
            mode: SolverMode::GaussianPca,
            stop_tol: 1e-12,
            ..Default::default()
        };
        let (_, diag) = factorize(y.view(), &config, &mut Rng::new(0)).unwrap();
        let losses: Vec<f64> = diag.iterations.iter().map(|r| r.loss).collect();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn invalid_configs() {
        let y = Array2::zeros((3, 3));
        let mut rng = Rng::new(0);
        for bad in [
            SolverConfig { rank: 0, ..Default::default() },
            SolverConfig { max_iter: 0, ..Default::default() },
            SolverConfig { stop_tol: 0.0, ..Default::default() },
            SolverConfig { cond: -1.0, ..Default::default() },
            SolverConfig { lambda: Lambda::Fixed(-1.0), ..Default::default() },
        ] {
            assert!(factorize(y.view(), &bad, &mut rng).is_err());
        }
        let neg = arr2(&[[-1.0]]);
        assert!(factorize(neg.view(), &SolverConfig { rank: 1, ..Default::default() }, &mut rng).is_err());
    }

    #[test]
    fn oversized_rank_warns() {
        let y = Array2::from_elem((2, 3), 1.0);
        let (_, diag) = factorize(y.view(), &SolverConfig::default(), &mut Rng::new(0)).unwrap();
        assert_eq!(diag.warnings.len(), 1);
    }
}
