use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::draws::PosteriorDraws;
use crate::data::Horizon;
use crate::error::{Error, Result};

/// Predictive draws for one target period, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub period: usize,
    pub horizon: Horizon,
    pub draws: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn quantile(&self, tau: f64) -> f64 {
        let mut v = self.draws.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        sorted_quantile(&v, tau)
    }

    pub fn quantiles(&self, taus: &[f64]) -> Vec<f64> {
        let mut v = self.draws.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        taus.iter().map(|&t| sorted_quantile(&v, t)).collect()
    }

    pub fn mean(&self) -> f64 {
        crate::linalg::mean(&self.draws)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

/// Type-7 empirical quantile of already sorted values.
pub fn sorted_quantile(sorted: &[f64], tau: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let tau = tau.clamp(0.0, 1.0);
    let pos = tau * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Type-7 empirical quantile.
pub fn empirical_quantile(values: &[f64], tau: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    sorted_quantile(&v, tau)
}

/// Map a draw in standardized target units back to original units.
pub fn destandardize(d: f64, y_mean: f64, y_sd: f64) -> f64 {
    y_mean + y_sd * d
}

/// Predictive draws at test row `test_index`: the recorded mean-function
/// draw plus Gaussian noise with the retained error variance (or the SV
/// state propagated one step), mapped back to original units.
///
/// `standardizer` is the `(mean, sd)` the caller built the test design with;
/// it must agree with the one stored in the draws.
pub fn draw_predictive<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    test_index: usize,
    standardizer: Option<(f64, f64)>,
    rng: &mut R,
) -> Result<PredictiveDistribution> {
    let h = &draws.header;
    if let Some((m, s)) = standardizer {
        let tol = 1e-9 * (1.0 + h.y_mean.abs().max(h.y_sd));
        if (m - h.y_mean).abs() > tol || (s - h.y_sd).abs() > tol {
            return Err(Error::invalid("target standardizer differs from the one used for fitting"));
        }
    }
    let period = *h
        .test_periods
        .get(test_index)
        .ok_or_else(|| Error::invalid(format!("no test row {test_index} in draws")))?;
    let f = draws
        .column(&format!("ftest[{test_index}]"))
        .ok_or_else(|| Error::invalid("draws hold no test-point function values"))?;
    let n_train = h.train_periods.len();
    let noise_var: Vec<f64> = if let Some(s2) = draws.column("sigma2") {
        s2.to_vec()
    } else {
        let (mu, phi, sig) = match (draws.column("sv_mu"), draws.column("sv_phi"), draws.column("sv_sigma")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::invalid("draws hold neither sigma2 nor SV parameters")),
        };
        let last = draws
            .column(&format!("logvol[{}]", n_train.saturating_sub(1)))
            .ok_or_else(|| Error::invalid("draws lack the final log-volatility"))?;
        (0..draws.n_draws())
            .map(|d| {
                let z: f64 = rng.sample(StandardNormal);
                (mu[d] + phi[d] * (last[d] - mu[d]) + sig[d] * z).exp()
            })
            .collect()
    };
    let mut out = Vec::with_capacity(f.len());
    for (fd, v) in f.iter().zip(&noise_var) {
        let z: f64 = rng.sample(StandardNormal);
        let d = fd + v.max(0.0).sqrt() * z;
        if !d.is_finite() {
            return Err(Error::numerical(format!("non-finite predictive draw for period {period}")));
        }
        out.push(destandardize(d, h.y_mean, h.y_sd));
    }
    Ok(PredictiveDistribution {
        period,
        horizon: h.config.horizon(),
        draws: out,
    })
}
