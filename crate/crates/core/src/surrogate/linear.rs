//! Linear regressors: ordinary least squares, ridge, lasso and plain SGD.
//!
//! All fit an unpenalised intercept by centering the design matrix.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Set when the solve fell back to the minimum-norm pseudo-inverse.
    pub rank_deficient: bool,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

struct Centered {
    x: Array2<f64>,
    y: Array1<f64>,
    x_mean: Array1<f64>,
    y_mean: f64,
}

fn center(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Centered> {
    if x.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.mean().expect("non-empty");
    Ok(Centered {
        x: &x - &x_mean,
        y: &y - y_mean,
        x_mean,
        y_mean,
    })
}

fn finish(c: &Centered, coefficients: Vec<f64>, rank_deficient: bool) -> LinearModel {
    let intercept = c.y_mean - c.x_mean.iter().zip(&coefficients).map(|(m, w)| m * w).sum::<f64>();
    LinearModel {
        coefficients,
        intercept,
        rank_deficient,
    }
}

fn to_dmatrix(x: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

/// Minimum-norm least squares via SVD; returns the solution and whether the
/// design was rank deficient.
fn min_norm_solve(x: &Array2<f64>, y: &Array1<f64>) -> Result<(Vec<f64>, bool)> {
    let a = to_dmatrix(x);
    let b = DVector::from_iterator(y.len(), y.iter().copied());
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = max_sv * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let w = svd
        .solve(&b, tol)
        .map_err(|e| Error::InvalidConfig(format!("least-squares solve failed: {e}")))?;
    Ok((w.iter().copied().collect(), rank < x.ncols()))
}

pub fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<LinearModel> {
    let c = center(x, y)?;
    let (w, deficient) = min_norm_solve(&c.x, &c.y)?;
    if deficient {
        log::warn!("ols: rank-deficient design, using the minimum-norm pseudo-inverse solution");
    }
    Ok(finish(&c, w, deficient))
}

pub fn fit_ridge(x: ArrayView2<f64>, y: ArrayView1<f64>, alpha: f64) -> Result<LinearModel> {
    if alpha < 0.0 {
        return Err(Error::InvalidConfig(format!("ridge alpha must be non-negative, got {alpha}")));
    }
    let c = center(x, y)?;
    let xt = c.x.t();
    let mut gram = to_dmatrix(&xt.dot(&c.x));
    for i in 0..gram.nrows() {
        gram[(i, i)] += alpha;
    }
    let rhs = xt.dot(&c.y);
    let rhs = DVector::from_iterator(rhs.len(), rhs.iter().copied());
    match gram.cholesky() {
        Some(chol) => Ok(finish(&c, chol.solve(&rhs).iter().copied().collect(), false)),
        None => {
            log::warn!("ridge: singular system at alpha={alpha}, using the minimum-norm pseudo-inverse solution");
            let (w, _) = min_norm_solve(&c.x, &c.y)?;
            Ok(finish(&c, w, true))
        }
    }
}

/// Cyclic coordinate descent on `(1/2n)||y - Xw||^2 + alpha ||w||_1`, using the
/// Gram matrix so each sweep costs O(p^2).
pub fn fit_lasso(x: ArrayView2<f64>, y: ArrayView1<f64>, alpha: f64, tol: f64, max_sweeps: usize) -> Result<LinearModel> {
    let c = center(x, y)?;
    let n = c.x.nrows() as f64;
    let p = c.x.ncols();
    let gram = c.x.t().dot(&c.x);
    let xty = c.x.t().dot(&c.y);
    let mut w = vec![0.0; p];
    let threshold = alpha * n;
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..p {
            let norm = gram[[j, j]];
            if norm <= 0.0 {
                continue;
            }
            let dot: f64 = (0..p).map(|k| gram[[j, k]] * w[k]).sum();
            let rho = xty[j] - dot + norm * w[j];
            let updated = if rho > threshold {
                (rho - threshold) / norm
            } else if rho < -threshold {
                (rho + threshold) / norm
            } else {
                0.0
            };
            max_change = max_change.max((updated - w[j]).abs());
            w[j] = updated;
        }
        if max_change < tol {
            return Ok(finish(&c, w, false));
        }
    }
    log::warn!("lasso: no convergence after {max_sweeps} sweeps");
    Ok(finish(&c, w, false))
}

#[derive(Clone, Debug)]
pub struct SgdParams {
    pub max_iter: usize,
    pub eta0: f64,
    pub alpha: f64,
    pub tol: f64,
    pub n_iter_no_change: usize,
}

/// Per-sample SGD on squared loss with an L2 penalty and a constant learning
/// rate. Stops once the epoch loss fails to improve by `tol * n` for
/// `n_iter_no_change` consecutive epochs.
pub fn fit_sgd(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &SgdParams, seed: u64) -> Result<LinearModel> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let p = x.ncols();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded(seed);
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..params.max_iter {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let row = x.row(i);
            let pred = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = pred - y[i];
            epoch_loss += 0.5 * err * err;
            let scale = 1.0 - params.eta0 * params.alpha;
            for (wj, xj) in w.iter_mut().zip(row.iter()) {
                *wj = *wj * scale - params.eta0 * err * xj;
            }
            b -= params.eta0 * err;
        }
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteGradient("sgd diverged".into()));
        }
        if epoch_loss > best - params.tol * n as f64 {
            stale += 1;
        } else {
            stale = 0;
        }
        best = best.min(epoch_loss);
        if stale >= params.n_iter_no_change {
            break;
        }
    }
    Ok(LinearModel {
        coefficients: w,
        intercept: b,
        rank_deficient: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::Array;
    use rand::Rng;

    fn full_rank_data(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = seeded(seed);
        let x = Array::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        let y = Array::from_shape_fn(n, |i| 0.5 + (0..p).map(|j| (j as f64 - 1.0) * x[[i, j]]).sum::<f64>() + rng.gen_range(-0.1..0.1));
        (x, y)
    }

    #[test]
    fn ridge_recovers_exact_slope() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let y = x.column(0).mapv(|v| 2.0 * v);
        let m = fit_ridge(x.view(), y.view(), 1e-9).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn ridge_at_zero_equals_ols() {
        let (x, y) = full_rank_data(80, 5, 1);
        let ols = fit_ols(x.view(), y.view()).unwrap();
        let ridge = fit_ridge(x.view(), y.view(), 0.0).unwrap();
        assert!(!ols.rank_deficient);
        for (a, b) in ols.coefficients.iter().zip(&ridge.coefficients) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((ols.intercept - ridge.intercept).abs() < 1e-8);
    }

    #[test]
    fn constant_shift_moves_intercept_only() {
        let (x, y) = full_rank_data(60, 4, 2);
        let shifted = &y + 3.25;
        for alpha in [0.0, 1.0] {
            let a = fit_ridge(x.view(), y.view(), alpha).unwrap();
            let b = fit_ridge(x.view(), shifted.view(), alpha).unwrap();
            assert!((b.intercept - a.intercept - 3.25).abs() < 1e-8);
            for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
                assert!((ca - cb).abs() < 1e-8);
            }
        }
        let a = fit_ols(x.view(), y.view()).unwrap();
        let b = fit_ols(x.view(), shifted.view()).unwrap();
        assert!((b.intercept - a.intercept - 3.25).abs() < 1e-8);
    }

    #[test]
    fn ols_handles_rank_deficiency() {
        // third column duplicates the first
        let (x, y) = full_rank_data(50, 2, 3);
        let mut xd = Array2::zeros((50, 3));
        xd.column_mut(0).assign(&x.column(0));
        xd.column_mut(1).assign(&x.column(1));
        xd.column_mut(2).assign(&x.column(0));
        let m = fit_ols(xd.view(), y.view()).unwrap();
        assert!(m.rank_deficient);
        // minimum norm splits the weight evenly across the duplicates
        assert!((m.coefficients[0] - m.coefficients[2]).abs() < 1e-8);
        let full = fit_ols(x.view(), y.view()).unwrap();
        assert!((m.coefficients[0] + m.coefficients[2] - full.coefficients[0]).abs() < 1e-8);
        let ridge = fit_ridge(xd.view(), y.view(), 0.0).unwrap();
        assert!(ridge.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn lasso_full_shrinkage() {
        let (x, y) = full_rank_data(40, 3, 4);
        let m = fit_lasso(x.view(), y.view(), 1e6, 1e-6, 10_000).unwrap();
        assert!(m.coefficients.iter().all(|&c| c == 0.0));
        assert!((m.intercept - y.mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn lasso_small_alpha_approaches_ols() {
        let (x, y) = full_rank_data(200, 3, 5);
        let lasso = fit_lasso(x.view(), y.view(), 1e-8, 1e-10, 10_000).unwrap();
        let ols = fit_ols(x.view(), y.view()).unwrap();
        for (a, b) in lasso.coefficients.iter().zip(&ols.coefficients) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn sgd_learns_a_slope() {
        let (x, y) = full_rank_data(200, 3, 6);
        let params = SgdParams {
            max_iter: 500,
            eta0: 1e-2,
            alpha: 0.0,
            tol: 1e-6,
            n_iter_no_change: 5,
        };
        let m = fit_sgd(x.view(), y.view(), &params, 0).unwrap();
        assert!((m.coefficients[2] - 1.0).abs() < 0.05, "{:?}", m.coefficients);
        assert_eq!(m, fit_sgd(x.view(), y.view(), &params, 0).unwrap());
    }
}
