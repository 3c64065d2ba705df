//! Stationarity transformations (FRED-MD/QD transformation codes 1-8).

use std::fmt;

use crate::error::{Error, Result};

/// Transformation code in `1..=8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransformCode(u8);

impl TransformCode {
    pub fn new(code: u8) -> Result<Self> {
        if (1..=8).contains(&code) {
            Ok(TransformCode(code))
        } else {
            Err(Error::invalid(format!("transformation code {code} not in 1..=8")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn uses_log(self) -> bool {
        matches!(self.0, 4..=6)
    }
}

impl fmt::Display for TransformCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn diff(x: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    for t in 1..x.len() {
        out[t] = x[t] - x[t - 1];
    }
    out
}

fn growth(x: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NAN; x.len()];
    for t in 1..x.len() {
        out[t] = x[t] / x[t - 1];
    }
    out
}

/// Apply `code` to `x`. Leading entries that are undefined are `NaN`, and so
/// is any entry that depends on a missing (`NaN`) input.
pub fn transform_series(x: &[f64], code: TransformCode) -> Result<Vec<f64>> {
    if code.uses_log() {
        if let Some((row, v)) = x.iter().enumerate().find(|(_, v)| !v.is_nan() && **v <= 0.0) {
            return Err(Error::data(format!(
                "log transformation (code {code}) of nonpositive value {v} at row {row}"
            )));
        }
    }
    if matches!(code.get(), 7 | 8) {
        if let Some(row) = x[..x.len().saturating_sub(1)].iter().position(|v| *v == 0.0) {
            return Err(Error::data(format!(
                "growth-rate transformation (code {code}) divides by zero at row {row}"
            )));
        }
    }
    let logs = || x.iter().map(|v| v.ln()).collect::<Vec<_>>();
    let out = match code.get() {
        1 => x.to_vec(),
        2 => diff(x),
        3 => diff(&diff(x)),
        4 => logs(),
        5 => diff(&logs()),
        6 => diff(&diff(&logs())),
        7 => diff(&growth(x).iter().map(|g| g - 1.0).collect::<Vec<_>>()),
        8 => growth(x).iter().map(|g| 100.0 * (g.powi(4) - 1.0)).collect(),
        _ => unreachable!("validated in TransformCode::new"),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(c: u8) -> TransformCode {
        TransformCode::new(c).unwrap()
    }

    #[test]
    fn identity() {
        assert_eq!(transform_series(&[1.0, 2.0, 3.0], code(1)).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn annualised_growth_of_constant_is_zero() {
        let out = transform_series(&[5.0, 5.0, 5.0], code(8)).unwrap();
        assert!(out[0].is_nan());
        assert_eq!(&out[1..], &[0.0, 0.0]);
    }

    #[test]
    fn log_difference_of_geometric_series() {
        let e = std::f64::consts::E;
        let out = transform_series(&[1.0, e, e * e], code(5)).unwrap();
        assert!(out[0].is_nan());
        assert!((out[1] - 1.0).abs() < 1e-15 && (out[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn second_differences_and_code_seven() {
        let out = transform_series(&[1.0, 2.0, 4.0, 8.0], code(3)).unwrap();
        assert!(out[0].is_nan() && out[1].is_nan());
        assert_eq!(&out[2..], &[1.0, 2.0]);
        // growth is 1 every period, so its change is zero
        let out = transform_series(&[1.0, 2.0, 4.0, 8.0], code(7)).unwrap();
        assert_eq!(&out[2..], &[0.0, 0.0]);
        let out = transform_series(&[1.0, 2.0, 4.0], code(6)).unwrap();
        assert!(out[2].abs() < 1e-15);
    }

    #[test]
    fn nonpositive_under_log_is_rejected() {
        let err = transform_series(&[1.0, 0.0, 2.0], code(5)).unwrap_err();
        assert!(err.to_string().contains("row 1"));
        assert!(transform_series(&[1.0, 0.0, 2.0], code(2)).is_ok());
        assert!(TransformCode::new(9).is_err());
        assert!(TransformCode::new(0).is_err());
    }
}
