//! Squared-exponential Gaussian process for the conditional mean.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, standard_normal_vec, symmetrize, CholFactor};
use crate::midas_basis::ImpliedLengthScale;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Kernel hyperparameters `(xi, lambda)`: signal variance and common inverse
/// length scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    pub xi: f64,
    pub lambda: f64,
}

impl KernelHyper {
    pub fn new(xi: f64, lambda: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite() && lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel hyperparameters must be positive, got xi={xi}, lambda={lambda}"
            )));
        }
        Ok(KernelHyper { xi, lambda })
    }
}

/// Pairwise squared Euclidean distances between the rows of `a` and `b`.
pub fn sq_dist_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::invalid(format!(
            "input dimension mismatch: {} vs {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("kernel inputs must be finite"));
    }
    // Row-major copies keep the inner loop contiguous.
    let (n, n2, m) = (a.nrows(), b.nrows(), a.ncols());
    let ra: Vec<f64> = (0..n).flat_map(|i| a.row(i).iter().copied().collect::<Vec<_>>()).collect();
    let rb: Vec<f64> = (0..n2).flat_map(|i| b.row(i).iter().copied().collect::<Vec<_>>()).collect();
    Ok(DMatrix::from_fn(n, n2, |i, j| {
        ra[i * m..(i + 1) * m]
            .iter()
            .zip(&rb[j * m..(j + 1) * m])
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    }))
}

/// `xi * exp(-lambda/2 * d)` applied elementwise to a distance matrix.
pub fn gram_from_sq_dist(d: &DMatrix<f64>, hyper: KernelHyper) -> DMatrix<f64> {
    let c = -0.5 * hyper.lambda;
    d.map(|v| hyper.xi * (c * v).exp())
}

pub fn se_kernel_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, hyper: KernelHyper) -> Result<DMatrix<f64>> {
    Ok(gram_from_sq_dist(&sq_dist_matrix(a, b)?, hyper))
}

/// Kernel on raw high-frequency lag stacks with the implied metric
/// `I_K (x) (lambda W W')`.
pub fn se_kernel_gram_metric(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    xi: f64,
    metric: &ImpliedLengthScale,
) -> Result<DMatrix<f64>> {
    if a.ncols() != metric.dim() || b.ncols() != metric.dim() {
        return Err(Error::invalid("raw lag stack does not match metric dimension"));
    }
    let mut diff = vec![0.0; a.ncols()];
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        for (c, d) in diff.iter_mut().enumerate() {
            *d = a[(i, c)] - b[(j, c)];
        }
        xi * (-0.5 * metric.quad_form(&diff)).exp()
    }))
}

#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cholesky_jitter_used: f64,
}

fn add_diag(k: &DMatrix<f64>, sigma: &DVector<f64>) -> Result<DMatrix<f64>> {
    if sigma.len() != k.nrows() || k.nrows() != k.ncols() {
        return Err(Error::invalid("noise vector does not match training Gram matrix"));
    }
    let mut a = k.clone();
    for (i, s) in sigma.iter().enumerate() {
        a[(i, i)] += s;
    }
    Ok(a)
}

/// Moments of `f(test) | y` from a factor of `K_train + Sigma`.
pub fn conditional_moments_with_factor(
    factor: &CholFactor,
    k_cross: &DMatrix<f64>,
    k_test: &DMatrix<f64>,
    y: &DVector<f64>,
) -> GpPosterior {
    let alpha = factor.solve(y);
    let mean = k_cross * alpha;
    let a = factor.solve_lower_mat(&k_cross.transpose());
    let mut cov = k_test - a.transpose() * a;
    symmetrize(&mut cov);
    GpPosterior { mean, cov, cholesky_jitter_used: factor.jitter }
}

/// Posterior moments of the latent function at test inputs.
///
/// `sigma` holds the diagonal of the noise covariance; `k_cross` is
/// `n_test x n_train`.
pub fn gp_conditional_moments(
    k_train: &DMatrix<f64>,
    k_cross: &DMatrix<f64>,
    k_test: &DMatrix<f64>,
    sigma: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<GpPosterior> {
    if k_cross.ncols() != k_train.nrows() || k_cross.nrows() != k_test.nrows() || y.len() != k_train.nrows() {
        return Err(Error::invalid("inconsistent Gram matrix dimensions"));
    }
    let factor = cholesky_jittered(&add_diag(k_train, sigma)?)?;
    Ok(conditional_moments_with_factor(&factor, k_cross, k_test, y))
}

/// Draw `mean + L z`.
pub fn sample_function_values<R: Rng + ?Sized>(moments: &GpPosterior, rng: &mut R) -> Result<DVector<f64>> {
    let n = moments.mean.len();
    let z = standard_normal_vec(n, rng);
    if moments.cov.iter().all(|&v| v == 0.0) {
        return Ok(moments.mean.clone());
    }
    let factor = cholesky_jittered(&moments.cov)?;
    Ok(&moments.mean + factor.mul_lower(&z))
}

/// Draw `f | y` at the training inputs by Matheron's rule,
/// `f = f0 + K (K + Sigma)^{-1} (y - f0 - e0)` with `(f0, e0)` a joint prior
/// draw. `unit_factor` factors the Gram matrix at `xi = 1` and `factor`
/// factors `K + Sigma`.
pub fn matheron_draw<R: Rng + ?Sized>(
    unit_factor: &CholFactor,
    hyper_xi: f64,
    k: &DMatrix<f64>,
    factor: &CholFactor,
    y: &DVector<f64>,
    sigma: &DVector<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let n = y.len();
    let f0 = unit_factor.mul_lower(&standard_normal_vec(n, rng)) * hyper_xi.sqrt();
    let e0 = DVector::from_fn(n, |i, _| sigma[i].sqrt() * rng.sample::<f64, _>(StandardNormal));
    let v = factor.solve(&(y - &f0 - e0));
    f0 + k * v
}

/// Log density of `y` under `N(0, K + Sigma)` given the factor of `K + Sigma`.
pub fn log_marginal_from_factor(factor: &CholFactor, y: &DVector<f64>) -> f64 {
    let v = factor.solve_lower(y);
    -0.5 * (v.norm_squared() + factor.log_det() + y.len() as f64 * LN_2PI)
}

pub fn gp_log_marginal(y: &DVector<f64>, k_train: &DMatrix<f64>, sigma: &DVector<f64>) -> Result<f64> {
    if y.is_empty() {
        return Ok(0.0);
    }
    let factor = cholesky_jittered(&add_diag(k_train, sigma)?)?;
    Ok(log_marginal_from_factor(&factor, y))
}

/// Gamma priors with shape `a` and rate `a / b` (prior mean `b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPriors {
    pub a_xi: f64,
    pub b_xi: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
}

impl KernelPriors {
    /// Defaults given the AR(1) residual variance of the standardized target.
    pub fn from_target_variance(s_y2: f64) -> Self {
        KernelPriors { a_xi: 0.5, b_xi: 1.0, a_lambda: 0.5, b_lambda: 0.1 * s_y2 }
    }

    pub fn log_prior(&self, h: KernelHyper) -> f64 {
        gamma_log_pdf(h.xi, self.a_xi, self.a_xi / self.b_xi)
            + gamma_log_pdf(h.lambda, self.a_lambda, self.a_lambda / self.b_lambda)
    }
}

pub fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Residual variance of a least-squares AR(1) with intercept.
pub fn ar1_residual_variance(y: &[f64]) -> f64 {
    let y: Vec<f64> = y.iter().copied().filter(|v| v.is_finite()).collect();
    let n = y.len();
    if n < 4 {
        return 1.0;
    }
    let (x, t) = (&y[..n - 1], &y[1..]);
    let mx = x.iter().sum::<f64>() / (n - 1) as f64;
    let mt = t.iter().sum::<f64>() / (n - 1) as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxt: f64 = x.iter().zip(t).map(|(a, b)| (a - mx) * (b - mt)).sum();
    let slope = if sxx > 0.0 { sxt / sxx } else { 0.0 };
    let ss: f64 = x
        .iter()
        .zip(t)
        .map(|(a, b)| (b - mt - slope * (a - mx)).powi(2))
        .sum();
    (ss / (n - 3) as f64).max(1e-6)
}

/// Random-walk step size tuned during burn-in toward 20-40% acceptance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveStep {
    pub scale: f64,
    pub adapting: bool,
    window_accepts: u32,
    window_tries: u32,
    pub total_accepts: u64,
    pub total_tries: u64,
}

impl AdaptiveStep {
    const WINDOW: u32 = 50;

    pub fn new(scale: f64) -> Self {
        AdaptiveStep {
            scale,
            adapting: true,
            window_accepts: 0,
            window_tries: 0,
            total_accepts: 0,
            total_tries: 0,
        }
    }

    pub fn record(&mut self, accepted: bool) {
        self.total_tries += 1;
        self.total_accepts += accepted as u64;
        if !self.adapting {
            return;
        }
        self.window_tries += 1;
        self.window_accepts += accepted as u32;
        if self.window_tries == Self::WINDOW {
            let rate = self.window_accepts as f64 / self.window_tries as f64;
            if rate < 0.2 {
                self.scale *= 0.7;
            } else if rate > 0.4 {
                self.scale *= 1.4;
            }
            self.window_tries = 0;
            self.window_accepts = 0;
        }
    }

    pub fn freeze(&mut self) {
        self.adapting = false;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.total_tries == 0 {
            return f64::NAN;
        }
        self.total_accepts as f64 / self.total_tries as f64
    }
}

/// Data entering the kernel-hyperparameter update: squared distances of the
/// training inputs, the target, and the noise diagonal.
pub struct KernelData<'a> {
    pub sq_dist: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub sigma: &'a DVector<f64>,
}

impl KernelData<'_> {
    /// Factor of `K + Sigma` and the log marginal, or `None` on numerical failure.
    pub fn evaluate(&self, hyper: KernelHyper) -> Option<(CholFactor, f64)> {
        let k = gram_from_sq_dist(self.sq_dist, hyper);
        let a = add_diag(&k, self.sigma).ok()?;
        let f = cholesky_jittered(&a).ok()?;
        let ll = log_marginal_from_factor(&f, self.y);
        ll.is_finite().then_some((f, ll))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSteps {
    pub xi: AdaptiveStep,
    pub lambda: AdaptiveStep,
}

impl Default for KernelSteps {
    fn default() -> Self {
        KernelSteps { xi: AdaptiveStep::new(0.5), lambda: AdaptiveStep::new(0.5) }
    }
}

/// Log posterior of the kernel parameters on the log scale, including the
/// Jacobian `log xi + log lambda`.
fn log_target(ll: f64, priors: &KernelPriors, h: KernelHyper) -> f64 {
    ll + priors.log_prior(h) + h.xi.ln() + h.lambda.ln()
}

/// One MH sweep: `log xi` then `log lambda`, each a Gaussian random walk.
///
/// `current_ll` is the log marginal at `current` (recomputed when `None`).
/// Returns the new state and its log marginal.
pub fn mh_update_kernel_hyper<R: Rng + ?Sized>(
    current: KernelHyper,
    current_ll: Option<f64>,
    data: &KernelData<'_>,
    priors: &KernelPriors,
    steps: &mut KernelSteps,
    rng: &mut R,
) -> (KernelHyper, f64) {
    let (h, ll, _) = mh_update_kernel_hyper_factored(current, current_ll, data, priors, steps, rng);
    (h, ll)
}

/// As [`mh_update_kernel_hyper`], also handing back the factor of
/// `K + Sigma` at the returned state when one was computed along the way.
pub fn mh_update_kernel_hyper_factored<R: Rng + ?Sized>(
    current: KernelHyper,
    current_ll: Option<f64>,
    data: &KernelData<'_>,
    priors: &KernelPriors,
    steps: &mut KernelSteps,
    rng: &mut R,
) -> (KernelHyper, f64, Option<CholFactor>) {
    let empty = data.y.is_empty();
    let eval = |h: KernelHyper| -> Option<(Option<CholFactor>, f64)> {
        if empty {
            Some((None, 0.0))
        } else {
            data.evaluate(h).map(|(f, ll)| (Some(f), ll))
        }
    };
    let mut state = current;
    let mut factor = None;
    let mut ll = match current_ll {
        Some(v) => v,
        None => match eval(current) {
            Some((f, v)) => {
                factor = f;
                v
            }
            None => f64::NEG_INFINITY,
        },
    };
    for which in 0..2 {
        let step = if which == 0 { &mut steps.xi } else { &mut steps.lambda };
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let u: f64 = rng.random();
        let delta = step.scale * z;
        let mut prop = state;
        if delta != 0.0 {
            if which == 0 {
                prop.xi = (state.xi.ln() + delta).exp();
            } else {
                prop.lambda = (state.lambda.ln() + delta).exp();
            }
        }
        let valid = prop.xi > 0.0 && prop.lambda > 0.0 && prop.xi.is_finite() && prop.lambda.is_finite();
        let accepted = match valid.then(|| eval(prop)).flatten() {
            Some((prop_factor, prop_ll)) => {
                let log_ratio = log_target(prop_ll, priors, prop) - log_target(ll, priors, state);
                let ok = log_ratio >= 0.0 || u.ln() < log_ratio;
                if ok {
                    state = prop;
                    ll = prop_ll;
                    factor = prop_factor;
                }
                ok
            }
            None => false,
        };
        step.record(accepted);
    }
    (state, ll, factor)
}
