//! Error-variance blocks: homoskedastic inverse-Gamma and a log-AR(1)
//! stochastic-volatility process sampled with the 10-component mixture
//! approximation of Omori, Chib, Shephard and Nakajima (2007).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sample_inv_gamma;

pub const MIX_WEIGHTS: [f64; 10] = [
    0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115,
];
pub const MIX_MEANS: [f64; 10] = [
    1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65,
];
pub const MIX_VARS: [f64; 10] = [
    0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342,
];

/// Offset inside `log(e^2 + c)`.
pub const LOG_SQ_OFFSET: f64 = 1e-6;

/// Draw `sigma^2 ~ IG(a0 + T/2, b0 + SS/2)`.
pub fn sample_homoskedastic_variance<R: Rng + ?Sized>(residuals: &[f64], a0: f64, b0: f64, rng: &mut R) -> f64 {
    let ss: f64 = residuals.iter().map(|e| e * e).sum();
    sample_inv_gamma(a0 + 0.5 * residuals.len() as f64, b0 + 0.5 * ss, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvPriors {
    pub mu_mean: f64,
    pub mu_var: f64,
    /// Beta parameters for `(phi + 1) / 2`.
    pub phi_a: f64,
    pub phi_b: f64,
    /// `sigma^2 ~ G(1/2, rate 1 / (2 b_sigma))`.
    pub b_sigma: f64,
}

impl Default for SvPriors {
    fn default() -> Self {
        SvPriors { mu_mean: 0.0, mu_var: 10.0, phi_a: 5.0, phi_b: 1.5, b_sigma: 1.0 }
    }
}

impl SvPriors {
    fn log_phi_prior(&self, phi: f64) -> f64 {
        let x = 0.5 * (phi + 1.0);
        (self.phi_a - 1.0) * x.ln() + (self.phi_b - 1.0) * (1.0 - x).ln()
    }

    fn log_sigma2_prior(&self, s2: f64) -> f64 {
        -0.5 * s2.ln() - s2 / (2.0 * self.b_sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvState {
    /// Log variances.
    pub h: Vec<f64>,
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
    pub indicators: Vec<u8>,
}

impl SvState {
    pub fn new(t: usize, mu: f64) -> Self {
        SvState { h: vec![mu; t], mu, phi: 0.9, sigma: 0.3, indicators: vec![4; t] }
    }

    pub fn variances(&self) -> Vec<f64> {
        self.h.iter().map(|h| h.exp()).collect()
    }

    /// One-step-ahead log variance from the state equation.
    pub fn next_log_variance<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let last = *self.h.last().unwrap_or(&self.mu);
        let z: f64 = rng.sample(StandardNormal);
        self.mu + self.phi * (last - self.mu) + self.sigma * z
    }
}

/// Linear-Gaussian state-space pieces: `obs_t = h_t + e_t`, `e_t ~ N(0, r_t)`.
struct Filtered {
    m: Vec<f64>,
    p: Vec<f64>,
}

fn kalman_filter(obs: &[f64], r: &[f64], mu: f64, phi: f64, s2: f64) -> Filtered {
    let n = obs.len();
    let (mut m, mut p) = (vec![0.0; n], vec![0.0; n]);
    let (mut a, mut pa) = (mu, s2 / (1.0 - phi * phi));
    for t in 0..n {
        let k = pa / (pa + r[t]);
        m[t] = a + k * (obs[t] - a);
        p[t] = (1.0 - k) * pa;
        a = mu + phi * (m[t] - mu);
        pa = phi * phi * p[t] + s2;
    }
    Filtered { m, p }
}

/// Rauch-Tung-Striebel smoothed means and variances of the log-variance path.
pub fn sv_smoother_moments(obs: &[f64], obs_var: &[f64], mu: f64, phi: f64, sigma2: f64) -> (Vec<f64>, Vec<f64>) {
    let n = obs.len();
    let f = kalman_filter(obs, obs_var, mu, phi, sigma2);
    let (mut ms, mut ps) = (f.m.clone(), f.p.clone());
    for t in (0..n.saturating_sub(1)).rev() {
        let pred = phi * phi * f.p[t] + sigma2;
        let g = f.p[t] * phi / pred;
        ms[t] = f.m[t] + g * (ms[t + 1] - (mu + phi * (f.m[t] - mu)));
        ps[t] = f.p[t] + g * g * (ps[t + 1] - pred);
    }
    (ms, ps)
}

/// Forward-filter backward-sample draw of the log-variance path.
pub fn ffbs<R: Rng + ?Sized>(obs: &[f64], obs_var: &[f64], mu: f64, phi: f64, sigma2: f64, rng: &mut R) -> Vec<f64> {
    let n = obs.len();
    if n == 0 {
        return Vec::new();
    }
    let f = kalman_filter(obs, obs_var, mu, phi, sigma2);
    let mut h = vec![0.0; n];
    let z: f64 = rng.sample(StandardNormal);
    h[n - 1] = f.m[n - 1] + f.p[n - 1].max(0.0).sqrt() * z;
    for t in (0..n - 1).rev() {
        let pred = phi * phi * f.p[t] + sigma2;
        let g = f.p[t] * phi / pred;
        let mean = f.m[t] + g * (h[t + 1] - mu - phi * (f.m[t] - mu));
        let var = (f.p[t] - g * phi * f.p[t]).max(0.0);
        let z: f64 = rng.sample(StandardNormal);
        h[t] = mean + var.sqrt() * z;
    }
    h
}

fn draw_indicators<R: Rng + ?Sized>(ystar: &[f64], h: &[f64], out: &mut [u8], rng: &mut R) {
    let mut logp = [0.0f64; 10];
    for t in 0..ystar.len() {
        let e = ystar[t] - h[t];
        for j in 0..10 {
            let d = e - MIX_MEANS[j];
            logp[j] = MIX_WEIGHTS[j].ln() - 0.5 * MIX_VARS[j].ln() - 0.5 * d * d / MIX_VARS[j];
        }
        let mx = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut cum = [0.0f64; 10];
        let mut acc = 0.0;
        for j in 0..10 {
            acc += (logp[j] - mx).exp();
            cum[j] = acc;
        }
        let u: f64 = rng.random::<f64>() * acc;
        out[t] = cum.iter().position(|&c| u < c).unwrap_or(9) as u8;
    }
}

fn sample_mu<R: Rng + ?Sized>(h: &[f64], phi: f64, s2: f64, pri: &SvPriors, rng: &mut R) -> f64 {
    let n = h.len();
    let mut prec = 1.0 / pri.mu_var + (1.0 - phi * phi) / s2;
    let mut num = pri.mu_mean / pri.mu_var + (1.0 - phi * phi) * h[0] / s2;
    if n > 1 {
        prec += (n - 1) as f64 * (1.0 - phi).powi(2) / s2;
        let sum: f64 = (1..n).map(|t| h[t] - phi * h[t - 1]).sum();
        num += (1.0 - phi) * sum / s2;
    }
    let z: f64 = rng.sample(StandardNormal);
    num / prec + z / prec.sqrt()
}

fn sample_phi<R: Rng + ?Sized>(h: &[f64], mu: f64, phi: f64, s2: f64, pri: &SvPriors, rng: &mut R) -> f64 {
    let n = h.len();
    if n < 2 {
        return phi;
    }
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for t in 1..n {
        let (x, y) = (h[t - 1] - mu, h[t] - mu);
        sxx += x * x;
        sxy += x * y;
    }
    if sxx <= 0.0 {
        return phi;
    }
    let z: f64 = rng.sample(StandardNormal);
    let prop = sxy / sxx + (s2 / sxx).sqrt() * z;
    if !(prop.abs() < 1.0) {
        return phi;
    }
    // Independence proposal from the AR likelihood of h_2..h_T; the prior and
    // the stationary initial-state density enter through the MH ratio.
    let d0 = (h[0] - mu).powi(2);
    let init = |p: f64| 0.5 * (1.0 - p * p).ln() - 0.5 * (1.0 - p * p) * d0 / s2;
    let log_ratio = pri.log_phi_prior(prop) + init(prop) - pri.log_phi_prior(phi) - init(phi);
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        prop
    } else {
        phi
    }
}

fn sample_sigma2<R: Rng + ?Sized>(h: &[f64], mu: f64, phi: f64, s2: f64, pri: &SvPriors, rng: &mut R) -> f64 {
    let n = h.len();
    if n < 3 {
        return s2;
    }
    let mut ss = (1.0 - phi * phi) * (h[0] - mu).powi(2);
    for t in 1..n {
        ss += (h[t] - mu - phi * (h[t - 1] - mu)).powi(2);
    }
    let prop = sample_inv_gamma(0.5 * n as f64 - 1.0, 0.5 * ss.max(1e-12), rng);
    if !(prop > 0.0 && prop.is_finite()) {
        return s2;
    }
    let log_ratio = pri.log_sigma2_prior(prop) - pri.log_sigma2_prior(s2);
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        prop
    } else {
        s2
    }
}

/// One Gibbs pass: mixture indicators, log-variance path, then `mu`, `phi`
/// and `sigma^2`.
pub fn sample_sv<R: Rng + ?Sized>(residuals: &[f64], state: &mut SvState, priors: &SvPriors, rng: &mut R) -> Result<()> {
    let n = residuals.len();
    if state.h.len() != n || state.indicators.len() != n {
        return Err(Error::invalid("SV state length does not match residuals"));
    }
    if residuals.iter().any(|e| !e.is_finite()) {
        return Err(Error::numerical("non-finite residuals in SV update"));
    }
    let ystar: Vec<f64> = residuals.iter().map(|e| (e * e + LOG_SQ_OFFSET).ln()).collect();
    draw_indicators(&ystar, &state.h, &mut state.indicators, rng);
    let obs: Vec<f64> = ystar
        .iter()
        .zip(&state.indicators)
        .map(|(y, &j)| y - MIX_MEANS[j as usize])
        .collect();
    let r: Vec<f64> = state.indicators.iter().map(|&j| MIX_VARS[j as usize]).collect();
    let s2 = state.sigma * state.sigma;
    state.h = ffbs(&obs, &r, state.mu, state.phi, s2, rng);
    state.mu = sample_mu(&state.h, state.phi, s2, priors, rng);
    state.phi = sample_phi(&state.h, state.mu, state.phi, s2, priors, rng);
    let s2 = sample_sigma2(&state.h, state.mu, state.phi, s2, priors, rng);
    state.sigma = s2.sqrt();
    if state.h.iter().any(|v| !v.is_finite()) || !state.mu.is_finite() {
        return Err(Error::numerical("SV path draw produced non-finite values"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn mixture_tables_are_normalized() {
        let total: f64 = MIX_WEIGHTS.iter().sum();
        assert!((total - 1.0).abs() < 1e-4);
        let mean: f64 = MIX_WEIGHTS.iter().zip(MIX_MEANS).map(|(p, m)| p * m).sum();
        // E log chi2_1 = -1.2704
        assert!((mean + 1.2704).abs() < 2e-3);
    }

    #[test]
    fn homoskedastic_posterior_mean() {
        let mut rng = stream(1, &[]);
        let res: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let ss: f64 = res.iter().map(|e| e * e).sum();
        let (a, b) = (0.01 + 20.0, 0.01 + 0.5 * ss);
        let n = 200_000;
        let m: f64 = (0..n).map(|_| sample_homoskedastic_variance(&res, 0.01, 0.01, &mut rng)).sum::<f64>() / n as f64;
        let exact = b / (a - 1.0);
        let sd = exact / (a - 2.0).sqrt();
        assert!((m - exact).abs() < 4.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn smoother_matches_dense_conditioning() {
        let (mu, phi, s2): (f64, f64, f64) = (-0.4, 0.8, 0.3);
        let obs = [0.5, -1.2, 0.1];
        let r = [0.62699, 2.54498, 0.17788];
        let n = 3;
        let prior_cov = DMatrix::from_fn(n, n, |i, j| {
            s2 / (1.0 - phi * phi) * phi.powi((i as i32 - j as i32).abs())
        });
        let obs_cov = &prior_cov + DMatrix::from_diagonal(&DVector::from_row_slice(&r));
        let inv = obs_cov.try_inverse().unwrap();
        let resid = DVector::from_fn(n, |i, _| obs[i] - mu);
        let mean = DVector::from_element(n, mu) + &prior_cov * &inv * resid;
        let cov = &prior_cov - &prior_cov * &inv * &prior_cov;
        let (m, p) = sv_smoother_moments(&obs, &r, mu, phi, s2);
        for t in 0..n {
            assert!((m[t] - mean[t]).abs() < 1e-8);
            assert!((p[t] - cov[(t, t)]).abs() < 1e-8);
        }
        // FFBS draws share those moments.
        let mut rng = stream(2, &[]);
        let draws = 200_000;
        let mut acc = [0.0; 3];
        let mut acc2 = [0.0; 3];
        for _ in 0..draws {
            let h = ffbs(&obs, &r, mu, phi, s2, &mut rng);
            for t in 0..n {
                acc[t] += h[t];
                acc2[t] += h[t] * h[t];
            }
        }
        for t in 0..n {
            let em = acc[t] / draws as f64;
            let ev = acc2[t] / draws as f64 - em * em;
            assert!((em - mean[t]).abs() < 4.0 * (cov[(t, t)] / draws as f64).sqrt());
            assert!((ev - cov[(t, t)]).abs() < 0.02 * cov[(t, t)]);
        }
    }

    #[test]
    fn vanishing_state_noise_collapses_path() {
        let obs = [3.0, -2.0, 1.0, 0.0, 5.0];
        let r = [1.0; 5];
        let mut rng = stream(3, &[]);
        let h = ffbs(&obs, &r, -1.0, 0.5, 1e-14, &mut rng);
        assert!(h.iter().all(|v| (v + 1.0).abs() < 1e-5));
    }

    #[test]
    fn recovers_simulated_log_volatility() {
        let (t, mu, phi, sig) = (500, -1.0, 0.95, 0.2);
        let mut rng = stream(4, &[]);
        let mut h = vec![0.0; t];
        h[0] = mu + sig / (1.0f64 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
        for i in 1..t {
            h[i] = mu + phi * (h[i - 1] - mu) + sig * rng.sample::<f64, _>(StandardNormal);
        }
        let e: Vec<f64> = h.iter().map(|v| (0.5 * v).exp() * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut st = SvState::new(t, 0.0);
        let pri = SvPriors::default();
        let mut mean_path = vec![0.0; t];
        let mut kept = 0.0;
        for it in 0..3000 {
            sample_sv(&e, &mut st, &pri, &mut rng).unwrap();
            assert!(st.phi.abs() < 1.0 && st.sigma > 0.0);
            if it >= 1000 {
                for (m, v) in mean_path.iter_mut().zip(&st.h) {
                    *m += v;
                }
                kept += 1.0;
            }
        }
        for m in &mut mean_path {
            *m /= kept;
        }
        let corr = crate::linalg::correlation(&mean_path, &h);
        assert!(corr > 0.6, "corr {corr}");
    }
}
