use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sampler::sorted_quantile;

/// Quantile levels of the CRPS approximation: 0.05, 0.06, ..., 0.95.
pub fn crps_grid() -> Vec<f64> {
    (5..=95).map(|i| i as f64 / 100.0).collect()
}

/// Levels reported individually in loss tables.
pub const REPORTED_QS_LEVELS: [f64; 5] = [0.05, 0.1, 0.5, 0.9, 0.95];

/// `QS_tau = 2 (y - q) (tau - 1{y <= q})`.
pub fn quantile_score(y: f64, q: f64, tau: f64) -> f64 {
    let ind = if y <= q { 1.0 } else { 0.0 };
    2.0 * (y - q) * (tau - ind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Weighting {
    Equal,
    Left,
    Right,
}

impl Weighting {
    pub fn weight(self, tau: f64) -> f64 {
        match self {
            Weighting::Equal => 1.0,
            Weighting::Left => (1.0 - tau) * (1.0 - tau),
            Weighting::Right => tau * tau,
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            Weighting::Equal => "CRPS",
            Weighting::Left => "CRPS-L",
            Weighting::Right => "CRPS-R",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Equal => "equal",
            Weighting::Left => "L",
            Weighting::Right => "R",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" | "E" | "e" => Ok(Weighting::Equal),
            "L" | "l" | "left" => Ok(Weighting::Left),
            "R" | "r" | "right" => Ok(Weighting::Right),
            _ => Err(Error::config(format!("unknown CRPS weighting '{s}'"))),
        }
    }
}

/// Grid CRPS given quantiles at each level of `grid`.
pub fn weighted_crps_from_quantiles(quantiles: &[f64], grid: &[f64], y: f64, weighting: Weighting) -> f64 {
    let total: f64 = grid
        .iter()
        .zip(quantiles)
        .map(|(&tau, &q)| weighting.weight(tau) * quantile_score(y, q, tau))
        .sum();
    total / grid.len() as f64
}

fn sorted_finite(draws: &[f64]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::invalid("no predictive draws to score"));
    }
    if draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("predictive draws contain non-finite values"));
    }
    let mut v = draws.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// Quantile-weighted CRPS with empirical (type-7) quantiles of `draws`.
pub fn weighted_crps(draws: &[f64], y: f64, weighting: Weighting) -> Result<f64> {
    let sorted = sorted_finite(draws)?;
    let grid = crps_grid();
    let q: Vec<f64> = grid.iter().map(|&t| sorted_quantile(&sorted, t)).collect();
    Ok(weighted_crps_from_quantiles(&q, &grid, y, weighting))
}

/// All per-forecast losses reported in loss tables, as `(metric, value)`.
pub fn forecast_losses(draws: &[f64], y: f64) -> Result<Vec<(String, f64)>> {
    let sorted = sorted_finite(draws)?;
    let grid = crps_grid();
    let q: Vec<f64> = grid.iter().map(|&t| sorted_quantile(&sorted, t)).collect();
    let mut out = vec![("MAE".to_string(), (y - sorted_quantile(&sorted, 0.5)).abs())];
    for w in [Weighting::Equal, Weighting::Left, Weighting::Right] {
        out.push((w.metric_name().to_string(), weighted_crps_from_quantiles(&q, &grid, y, w)));
    }
    for tau in REPORTED_QS_LEVELS {
        out.push((format!("QS{:02}", (tau * 100.0).round() as u32), quantile_score(y, sorted_quantile(&sorted, tau), tau)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_score_plug_ins() {
        assert_eq!(quantile_score(1.0, 1.0, 0.3), 0.0);
        assert_eq!(quantile_score(2.0, 0.0, 0.5), 2.0);
        assert!((quantile_score(-1.0, 1.0, 0.9) - 0.2 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn point_mass_scores_zero() {
        let d = vec![1.5; 50];
        for w in [Weighting::Equal, Weighting::Left, Weighting::Right] {
            assert_eq!(weighted_crps(&d, 1.5, w).unwrap(), 0.0);
        }
        assert!(weighted_crps(&[], 0.0, Weighting::Equal).is_err());
    }

    #[test]
    fn left_tail_outcome_penalized_more_by_left_weights() {
        let d: Vec<f64> = (0..1000).map(|i| (i as f64 - 500.0) / 100.0).collect();
        let l = weighted_crps(&d, -20.0, Weighting::Left).unwrap();
        let r = weighted_crps(&d, -20.0, Weighting::Right).unwrap();
        assert!(l > r);
    }
}
