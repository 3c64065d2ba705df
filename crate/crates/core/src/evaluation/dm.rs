use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::data::Horizon;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    /// `NaN` when the loss differential has zero variance.
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
}

impl DmResult {
    /// `"***"`, `"**"`, `"*"` at the 0.1%, 1% and 5% levels.
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// HAC truncation lag: forecasts of the next low-frequency period overlap by
/// one period.
/// Shortest loss series accepted by [`dm_test`].
pub const DM_MIN_LENGTH: usize = 10;

pub fn dm_lags(h: Horizon) -> usize {
    h.lf_periods()
}

/// Newey-West long-run variance of `d` with Bartlett weights.
pub fn long_run_variance(d: &[f64], lags: usize) -> f64 {
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let gamma = |k: usize| (k..n).map(|t| (d[t] - mean) * (d[t - k] - mean)).sum::<f64>() / n as f64;
    let mut v = gamma(0);
    for k in 1..=lags.min(n.saturating_sub(1)) {
        v += 2.0 * (1.0 - k as f64 / (lags + 1) as f64) * gamma(k);
    }
    v
}

/// Diebold-Mariano test of equal expected loss. Positive statistics mean
/// `a` has larger losses than `b`.
pub fn dm_test(a: &[f64], b: &[f64], h: Horizon, harvey: bool) -> Result<DmResult> {
    if a.len() != b.len() {
        return Err(Error::invalid("loss series differ in length"));
    }
    let n = a.len();
    if n < DM_MIN_LENGTH {
        return Err(Error::invalid(format!("DM test needs at least {DM_MIN_LENGTH} losses")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("loss series contain non-finite values"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let lags = dm_lags(h);
    let v = long_run_variance(&d, lags);
    let mean = d.iter().sum::<f64>() / n as f64;
    let scale = d.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    if !(v > 1e-24 * scale * scale) {
        return Ok(DmResult { statistic: f64::NAN, p_value: 1.0, lags });
    }
    let mut stat = mean / (v / n as f64).sqrt();
    let p_value = if harvey {
        let (nf, hf) = (n as f64, (lags + 1) as f64);
        stat *= ((nf + 1.0 - 2.0 * hf + hf * (hf - 1.0) / nf) / nf).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| Error::numerical(e.to_string()))?;
        2.0 * t.cdf(-stat.abs())
    } else {
        2.0 * Normal::standard().cdf(-stat.abs())
    };
    Ok(DmResult { statistic: stat, p_value, lags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_series_do_not_reject() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64).sin().abs()).collect();
        let r = dm_test(&a, &a, Horizon::new(0, 3), false).unwrap();
        assert!(r.statistic.is_nan());
        assert!(!r.rejects(0.05));
    }

    #[test]
    fn power_against_shifted_mean() {
        let mut rng = stream(11, &[]);
        let mut rejections = 0;
        for _ in 0..200 {
            let a: Vec<f64> = (0..200).map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal)).collect();
            let b = vec![0.0; 200];
            if dm_test(&a, &b, Horizon::new(0, 3), false).unwrap().rejects(0.05) {
                rejections += 1;
            }
        }
        assert!(rejections >= 199);
    }

    #[test]
    fn lag_zero_statistic_is_permutation_invariant() {
        let mut rng = stream(12, &[]);
        let a: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let perm: Vec<usize> = (0..40).map(|i| (i * 7) % 40).collect();
        let ap: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
        let bp: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        let h = Horizon::new(0, 3);
        let s1 = dm_test(&a, &b, h, false).unwrap().statistic;
        let s2 = dm_test(&ap, &bp, h, false).unwrap().statistic;
        assert!((s1 - s2).abs() < 1e-12);
    }
}
