//! Lasso surrogate for variable importance: regress predictive medians on
//! the design and aggregate coefficients by underlying variable.
//!
//! Objective: `sum_t (y_t - x_t'b)^2 + rho * sum_i |b_i|` on centred data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CV_FOLDS: usize = 5;
pub const GRID_POINTS: usize = 50;
/// The grid spans `rho_max * 10^-GRID_DECADES ..= rho_max`.
pub const GRID_DECADES: f64 = 4.0;
pub const MIN_OBSERVATIONS: usize = 20;

const CD_TOL: f64 = 1e-13;
const CD_MAX_SWEEPS: usize = 20_000;

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Centre columns of `x` and `y`; returns the centred data and the means.
fn centre(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, f64) {
    let n = x.nrows() as f64;
    let xm: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let ym = y.sum() / n;
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - xm[j]);
    (xc, y.add_scalar(-ym), xm, ym)
}

/// Coordinate descent on already centred data, warm-started at `b`.
pub fn lasso_coordinate_descent(x: &DMatrix<f64>, y: &DVector<f64>, rho: f64, b: &mut DVector<f64>) -> Result<usize> {
    let p = x.ncols();
    if b.len() != p || y.len() != x.nrows() {
        return Err(Error::invalid("lasso dimensions disagree"));
    }
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let mut r = y - x * &*b;
    let scale = y.norm().max(1e-300);
    for sweep in 1..=CD_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if norms[j] == 0.0 {
                b[j] = 0.0;
                continue;
            }
            let col = x.column(j);
            let old = b[j];
            let z = col.dot(&r) + norms[j] * old;
            let new = soft_threshold(z, 0.5 * rho) / norms[j];
            if new != old {
                r.axpy(old - new, &col, 1.0);
                b[j] = new;
                max_change = max_change.max((new - old).abs() * norms[j].sqrt());
            }
        }
        if max_change <= CD_TOL * scale {
            return Ok(sweep);
        }
    }
    log::warn!("lasso coordinate descent stopped after {CD_MAX_SWEEPS} sweeps at rho = {rho}");
    Ok(CD_MAX_SWEEPS)
}

/// Lasso fit with intercept (by centring, unpenalised).
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, rho: f64) -> Result<(f64, DVector<f64>)> {
    let (xc, yc, xm, ym) = centre(x, y);
    let mut b = DVector::zeros(x.ncols());
    lasso_coordinate_descent(&xc, &yc, rho, &mut b)?;
    let intercept = ym - xm.iter().zip(b.iter()).map(|(m, b)| m * b).sum::<f64>();
    Ok((intercept, b))
}

/// Smallest penalty with an all-zero solution.
pub fn rho_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let (xc, yc, _, _) = centre(x, y);
    (xc.transpose() * yc).amax() * 2.0
}

/// Log-spaced grid, decreasing.
pub fn rho_grid(rho_max: f64) -> Vec<f64> {
    (0..GRID_POINTS)
        .map(|i| rho_max * 10f64.powf(-GRID_DECADES * i as f64 / (GRID_POINTS - 1) as f64))
        .collect()
}

/// Contiguous fold index of each row.
pub fn contiguous_folds(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| i * k / n).collect()
}

/// Largest KKT violation: for zero coefficients `|2 x_j'r| - rho`, for
/// nonzero ones `|2 x_j'r - rho sign(b_j)|`.
pub fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, rho: f64, intercept: f64, b: &DVector<f64>) -> f64 {
    let r = y - x * b - DVector::from_element(y.len(), intercept);
    let g = x.transpose() * r * 2.0;
    g.iter()
        .zip(b.iter())
        .map(|(g, b)| if *b == 0.0 { (g.abs() - rho).max(0.0) } else { (g - rho * b.signum()).abs() })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoImportance {
    pub rho: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    /// `(variable, summed coefficient)` in first-appearance order.
    pub by_variable: Vec<(String, f64)>,
    pub grid: Vec<f64>,
    pub cv_mse: Vec<f64>,
    /// Every grid point gave an all-zero solution.
    pub all_zero: bool,
}

/// Cross-validated Lasso of `medians` on `x`, aggregated over
/// `column_variables` (the underlying variable of each column).
pub fn lasso_importance(
    medians: &[f64],
    x: &DMatrix<f64>,
    column_names: &[String],
    column_variables: &[String],
) -> Result<LassoImportance> {
    let n = medians.len();
    if n < MIN_OBSERVATIONS {
        return Err(Error::invalid(format!("lasso importance needs at least {MIN_OBSERVATIONS} observations")));
    }
    if x.nrows() != n || column_names.len() != x.ncols() || column_variables.len() != x.ncols() {
        return Err(Error::invalid("lasso inputs disagree in size"));
    }
    if medians.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("lasso inputs contain non-finite values"));
    }
    let y = DVector::from_column_slice(medians);
    let grid = rho_grid(rho_max(x, &y));
    let folds = contiguous_folds(n, CV_FOLDS);
    let mut cv_sse = vec![0.0; grid.len()];
    for f in 0..CV_FOLDS {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let xt = x.select_rows(&train);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let (xc, yc, xm, ym) = centre(&xt, &yt);
        let mut b = DVector::zeros(x.ncols());
        for (g, &rho) in grid.iter().enumerate() {
            lasso_coordinate_descent(&xc, &yc, rho, &mut b)?;
            let intercept = ym - xm.iter().zip(b.iter()).map(|(m, b)| m * b).sum::<f64>();
            for &i in &test {
                let pred = intercept + x.row(i).transpose().dot(&b);
                cv_sse[g] += (y[i] - pred).powi(2);
            }
        }
    }
    let cv_mse: Vec<f64> = cv_sse.iter().map(|s| s / n as f64).collect();
    let best = (0..grid.len()).min_by(|&a, &b| cv_mse[a].total_cmp(&cv_mse[b])).unwrap_or(0);
    let rho = grid[best];
    let (intercept, b) = lasso_fit(x, &y, rho)?;
    let (xc, yc, _, _) = centre(x, &y);
    let all_zero = grid.iter().all(|&r| {
        let mut b = DVector::zeros(x.ncols());
        lasso_coordinate_descent(&xc, &yc, r, &mut b).map(|_| b.iter().all(|v| *v == 0.0)).unwrap_or(false)
    });
    let mut by_variable: Vec<(String, f64)> = Vec::new();
    for (v, c) in column_variables.iter().zip(b.iter()) {
        match by_variable.iter_mut().find(|(name, _)| name == v) {
            Some(e) => e.1 += c,
            None => by_variable.push((v.clone(), *c)),
        }
    }
    Ok(LassoImportance {
        rho,
        intercept,
        coefficients: b.iter().copied().collect(),
        column_names: column_names.to_vec(),
        by_variable,
        grid,
        cv_mse,
        all_zero,
    })
}
