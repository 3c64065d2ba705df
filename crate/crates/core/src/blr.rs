//! Linear conditional mean with a horseshoe prior on the coefficients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, sample_inv_gamma, standard_normal_vec};

/// Lower bound applied to every variance-type parameter.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Global-local scales in the auxiliary inverse-Gamma representation of the
/// half-Cauchy priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeState {
    pub tau2: f64,
    pub lam2: Vec<f64>,
    pub aux_tau: f64,
    pub aux_lam: Vec<f64>,
    pub beta: Vec<f64>,
}

impl HorseshoeState {
    pub fn new(m: usize) -> Self {
        HorseshoeState {
            tau2: 1.0,
            lam2: vec![1.0; m],
            aux_tau: 1.0,
            aux_lam: vec![1.0; m],
            beta: vec![0.0; m],
        }
    }

    pub fn m(&self) -> usize {
        self.lam2.len()
    }

    /// Diagonal of the prior covariance `tau^2 diag(lambda_m^2)`.
    pub fn prior_variances(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.lam2.iter().map(|l| (self.tau2 * l).max(VARIANCE_FLOOR)),
        )
    }
}

fn check_dims(x: &DMatrix<f64>, y: &DVector<f64>, sigma: &DVector<f64>, prior_var: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() || sigma.len() != y.len() || prior_var.len() != x.ncols() {
        return Err(Error::invalid(format!(
            "dimension mismatch: X {}x{}, y {}, Sigma {}, prior {}",
            x.nrows(),
            x.ncols(),
            y.len(),
            sigma.len(),
            prior_var.len()
        )));
    }
    if sigma.iter().chain(prior_var.iter()).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("variances must be positive"));
    }
    Ok(())
}

/// `Sigma^{-1/2} X` and `Sigma^{-1/2} y`.
fn whiten(x: &DMatrix<f64>, y: &DVector<f64>, sigma: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let inv_sd: Vec<f64> = sigma.iter().map(|s| 1.0 / s.sqrt()).collect();
    let xw = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * inv_sd[i]);
    let yw = DVector::from_fn(y.len(), |i, _| y[i] * inv_sd[i]);
    (xw, yw)
}

/// Closed-form posterior mean and covariance of the coefficients.
pub fn beta_posterior_moments(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma: &DVector<f64>,
    prior_var: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dims(x, y, sigma, prior_var)?;
    let (xw, yw) = whiten(x, y, sigma);
    let mut prec = xw.transpose() * &xw;
    for (i, v) in prior_var.iter().enumerate() {
        prec[(i, i)] += 1.0 / v;
    }
    let f = cholesky_jittered(&prec)?;
    let cov = f.solve_mat(&DMatrix::identity(prec.nrows(), prec.nrows()));
    let mean = f.solve(&(xw.transpose() * yw));
    Ok((mean, cov))
}

/// Draw `beta ~ N(beta_bar, V_bar)`.
///
/// Uses the Cholesky factor of the `M x M` posterior precision when
/// `T >= M` and the data-augmentation sampler of Bhattacharya, Chakraborty
/// and Mallick (2016) when `T < M`, which only factors a `T x T` matrix.
pub fn sample_beta<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma: &DVector<f64>,
    prior_var: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    check_dims(x, y, sigma, prior_var)?;
    let (t, m) = (x.nrows(), x.ncols());
    let (xw, yw) = whiten(x, y, sigma);
    if t < m {
        sample_beta_fast(&xw, &yw, prior_var, rng)
    } else {
        let mut prec = xw.transpose() * &xw;
        for (i, v) in prior_var.iter().enumerate() {
            prec[(i, i)] += 1.0 / v;
        }
        let f = cholesky_jittered(&prec)?;
        let mean = f.solve(&(xw.transpose() * yw));
        let z = standard_normal_vec(m, rng);
        Ok(mean + f.solve_upper(&z))
    }
}

fn sample_beta_fast<R: Rng + ?Sized>(
    xw: &DMatrix<f64>,
    yw: &DVector<f64>,
    prior_var: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (t, m) = (xw.nrows(), xw.ncols());
    let u = DVector::from_fn(m, |i, _| prior_var[i].sqrt()) .component_mul(&standard_normal_vec(m, rng));
    let d = standard_normal_vec(t, rng);
    let v = xw * &u + d;
    // X V X' + I
    let xv = DMatrix::from_fn(t, m, |i, j| xw[(i, j)] * prior_var[j]);
    let mut a = &xv * xw.transpose();
    for i in 0..t {
        a[(i, i)] += 1.0;
    }
    let f = cholesky_jittered(&a)?;
    let w = f.solve(&(yw - v));
    Ok(u + xv.transpose() * w)
}

/// One sweep of the auxiliary-variable Gibbs updates for the horseshoe
/// scales given `beta`: `tau^2`, each `lambda_m^2`, then the auxiliaries.
pub fn update_horseshoe<R: Rng + ?Sized>(state: &mut HorseshoeState, beta: &[f64], rng: &mut R) {
    let m = state.m();
    assert_eq!(beta.len(), m, "beta length must equal number of scales");
    let ss: f64 = beta
        .iter()
        .zip(&state.lam2)
        .map(|(b, l)| b * b / l.max(VARIANCE_FLOOR))
        .sum();
    state.tau2 = sample_inv_gamma(0.5 * (m as f64 + 1.0), 1.0 / state.aux_tau + 0.5 * ss, rng)
        .max(VARIANCE_FLOOR);
    for j in 0..m {
        let scale = 1.0 / state.aux_lam[j] + beta[j] * beta[j] / (2.0 * state.tau2);
        state.lam2[j] = sample_inv_gamma(1.0, scale, rng).max(VARIANCE_FLOOR);
    }
    state.aux_tau = sample_inv_gamma(1.0, 1.0 + 1.0 / state.tau2, rng).max(VARIANCE_FLOOR);
    for j in 0..m {
        state.aux_lam[j] = sample_inv_gamma(1.0, 1.0 + 1.0 / state.lam2[j], rng).max(VARIANCE_FLOOR);
    }
    state.beta = beta.to_vec();
}
