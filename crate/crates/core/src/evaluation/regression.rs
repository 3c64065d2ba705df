use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dm::significance_stars;
use crate::error::{Error, Result};

/// One categorical regressor: a level per observation and the level absorbed
/// by the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    pub baseline: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyCoefficient {
    pub name: String,
    /// OLS estimate times 100.
    pub estimate: f64,
    /// Robust standard error times 100.
    pub std_error: f64,
    pub p_value: f64,
    pub stars: String,
}

/// OLS of `log_losses` on an intercept and baseline-free dummies, with
/// HC1 standard errors. The intercept is not reported.
pub fn dummy_regression(log_losses: &[f64], factors: &[Factor]) -> Result<Vec<DummyCoefficient>> {
    let n = log_losses.len();
    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for f in factors {
        if f.levels.len() != n {
            return Err(Error::invalid(format!("factor '{}' has {} levels for {n} losses", f.name, f.levels.len())));
        }
        let mut distinct: Vec<&String> = f.levels.iter().collect();
        distinct.sort();
        distinct.dedup();
        for level in distinct {
            if *level == f.baseline {
                continue;
            }
            names.push(format!("{}={}", f.name, level));
            cols.push(f.levels.iter().map(|l| if l == level { 1.0 } else { 0.0 }).collect());
        }
    }
    let p = cols.len() + 1;
    if n <= p {
        return Err(Error::invalid("dummy regression has no residual degrees of freedom"));
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let y = DVector::from_column_slice(log_losses);
    let xtx = x.transpose() * &x;
    let svd = xtx.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax.max(1.0) {
        return Err(Error::invalid("dummy design is rank deficient"));
    }
    let inv = xtx.try_inverse().ok_or_else(|| Error::invalid("dummy design is rank deficient"))?;
    let beta = &inv * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let mut meat = DMatrix::zeros(p, p);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * resid[i].powi(2);
    }
    let cov = &inv * meat * &inv * (n as f64 / (n - p) as f64);
    let normal = Normal::standard();
    Ok(names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let j = k + 1;
            let se = cov[(j, j)].max(0.0).sqrt();
            let p_value = if se > 0.0 { 2.0 * normal.cdf(-(beta[j] / se).abs()) } else if beta[j] == 0.0 { 1.0 } else { 0.0 };
            DummyCoefficient {
                name,
                estimate: 100.0 * beta[j],
                std_error: 100.0 * se,
                p_value,
                stars: significance_stars(p_value).to_string(),
            }
        })
        .collect())
}
