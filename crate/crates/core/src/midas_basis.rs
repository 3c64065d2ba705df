//! MIDAS lag-weight matrices.
//!
//! A weight matrix `W` is `P_H x ncols` and compresses the `P_H` high-frequency
//! lags of one predictor into `ncols` low-frequency regressors (`x = W' z`).
//! Lag indices for the Almon, Legendre and Bernstein families are mapped to
//! `p / (P_H - 1)` in `[0, 1]` before the basis is evaluated; the Fourier
//! family uses the raw lag index with frequency `2 pi / (L m)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Unrestricted MIDAS, `W = I`.
    #[serde(rename = "u")]
    Unrestricted,
    /// Bridge: equal weights `1 / P_H`.
    #[serde(rename = "br")]
    Bridge,
    /// Two-parameter exponential Almon lag.
    #[serde(rename = "xalm")]
    ExpAlmon,
    /// Power (Almon) polynomials.
    #[serde(rename = "alm")]
    Almon,
    /// Legendre polynomials shifted to `[0, 1]`.
    #[serde(rename = "leg")]
    Legendre,
    /// Bernstein basis polynomials.
    #[serde(rename = "ber")]
    Bernstein,
    /// Fourier basis.
    #[serde(rename = "fou")]
    Fourier,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Unrestricted,
        Scheme::Bridge,
        Scheme::ExpAlmon,
        Scheme::Almon,
        Scheme::Legendre,
        Scheme::Bernstein,
        Scheme::Fourier,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Scheme::Unrestricted => "u",
            Scheme::Bridge => "br",
            Scheme::ExpAlmon => "xalm",
            Scheme::Almon => "alm",
            Scheme::Legendre => "leg",
            Scheme::Bernstein => "ber",
            Scheme::Fourier => "fou",
        }
    }

    /// Families parameterised by a polynomial degree `L >= 1`.
    pub fn is_polynomial(self) -> bool {
        matches!(
            self,
            Scheme::Almon | Scheme::Legendre | Scheme::Bernstein | Scheme::Fourier
        )
    }

    /// Number of compressed columns for a given lag count and degree.
    pub fn ncols(self, p_h: usize, degree: usize) -> usize {
        match self {
            Scheme::Unrestricted => p_h,
            Scheme::Bridge | Scheme::ExpAlmon => 1,
            _ => degree + 1,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.code() == s)
            .ok_or_else(|| Error::invalid(format!("unknown MIDAS scheme '{s}'")))
    }
}

/// A `P_H x ncols` lag-weight matrix and the metadata that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MidasWeightMatrix {
    pub scheme: Scheme,
    pub p_h: usize,
    pub degree: usize,
    pub values: DMatrix<f64>,
    pub theta: Option<(f64, f64)>,
}

impl MidasWeightMatrix {
    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// First column as a vector of lag weights (the implied lag profile for
    /// single-column schemes).
    pub fn lag_profile(&self) -> DVector<f64> {
        self.values.column(0).into_owned()
    }
}

/// Exponential Almon weights with numerator `exp(t1 r) + exp(t2 r^2)`,
/// normalised to sum to one, `r = 0..P_H-1`.
pub fn exp_almon_weights(p_h: usize, theta: (f64, f64)) -> Vec<f64> {
    let (t1, t2) = theta;
    // Work on the log scale so large positive thetas do not overflow.
    let logs: Vec<f64> = (0..p_h)
        .map(|r| {
            let r = r as f64;
            log_add_exp(t1 * r, t2 * r * r)
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    unnorm.into_iter().map(|u| u / total).collect()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Unshifted Legendre polynomials `P_0..P_degree` at `x` by the three-term
/// recurrence.
pub fn legendre_values(x: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    out.push(1.0);
    if degree >= 1 {
        out.push(x);
    }
    for l in 1..degree {
        let lf = l as f64;
        let next = (2.0 * lf + 1.0) / (lf + 1.0) * x * out[l] - lf / (lf + 1.0) * out[l - 1];
        out.push(next);
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Build the weight matrix for `scheme`.
///
/// `degree` is ignored by `u`, `br` and `xalm`. `theta` must be present for
/// `xalm` and absent otherwise.
pub fn build_weight_matrix(
    scheme: Scheme,
    p_h: usize,
    degree: usize,
    m: usize,
    theta: Option<(f64, f64)>,
) -> Result<MidasWeightMatrix> {
    if p_h == 0 {
        return Err(Error::invalid("P_H must be at least 1"));
    }
    if m == 0 {
        return Err(Error::invalid("frequency ratio m must be at least 1"));
    }
    match (scheme, theta) {
        (Scheme::ExpAlmon, None) => {
            return Err(Error::invalid("xalm weights need theta = (theta1, theta2)"))
        }
        (Scheme::ExpAlmon, Some((a, b))) if !a.is_finite() || !b.is_finite() => {
            return Err(Error::invalid("xalm theta must be finite"))
        }
        (s, Some(_)) if s != Scheme::ExpAlmon => {
            return Err(Error::invalid(format!("theta given for scheme '{s}'")))
        }
        _ => {}
    }
    if scheme.is_polynomial() {
        if degree == 0 {
            return Err(Error::invalid(format!(
                "scheme '{scheme}' needs polynomial degree >= 1"
            )));
        }
        if p_h == 1 && scheme != Scheme::Fourier {
            return Err(Error::invalid(format!(
                "scheme '{scheme}' with P_H = 1 cannot normalise lag indices"
            )));
        }
    }

    let ncols = scheme.ncols(p_h, degree);
    let norm = |p: usize| p as f64 / (p_h.max(2) - 1) as f64;
    let values = match scheme {
        Scheme::Unrestricted => DMatrix::identity(p_h, p_h),
        Scheme::Bridge => DMatrix::from_element(p_h, 1, 1.0 / p_h as f64),
        Scheme::ExpAlmon => DMatrix::from_vec(p_h, 1, exp_almon_weights(p_h, theta.unwrap())),
        Scheme::Almon => {
            DMatrix::from_fn(p_h, ncols, |p, l| norm(p).powi(l as i32))
        }
        Scheme::Legendre => {
            let mut w = DMatrix::zeros(p_h, ncols);
            for p in 0..p_h {
                let vals = legendre_values(2.0 * norm(p) - 1.0, degree);
                for (l, v) in vals.into_iter().enumerate() {
                    w[(p, l)] = v;
                }
            }
            w
        }
        Scheme::Bernstein => DMatrix::from_fn(p_h, ncols, |p, l| {
            let x = norm(p);
            binomial(degree, l) * x.powi(l as i32) * (1.0 - x).powi((degree - l) as i32)
        }),
        Scheme::Fourier => {
            let freq = 2.0 * std::f64::consts::PI / (degree as f64 * m as f64);
            DMatrix::from_fn(p_h, ncols, |p, l| {
                let arg = l as f64 * freq * p as f64;
                if l == 0 {
                    1.0
                } else if l % 2 == 1 {
                    arg.cos()
                } else {
                    arg.sin()
                }
            })
        }
    };

    Ok(MidasWeightMatrix {
        scheme,
        p_h,
        degree: ncols - 1,
        values,
        theta,
    })
}

/// `K` copies of `lambda W W'`: the inverse length-scale metric that the
/// compressed squared-exponential kernel implies on raw high-frequency lags.
#[derive(Debug, Clone)]
pub struct ImpliedLengthScale {
    pub block: DMatrix<f64>,
    pub k: usize,
    pub lambda: f64,
}

impl ImpliedLengthScale {
    pub fn dim(&self) -> usize {
        self.k * self.block.nrows()
    }

    /// Dense block-diagonal `I_K (x) (lambda W W')`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.block.nrows();
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for k in 0..self.k {
            out.view_mut((k * p, k * p), (p, p)).copy_from(&self.block);
        }
        out
    }

    /// `d' Lambda d` for a stacked raw-lag difference vector.
    pub fn quad_form(&self, diff: &[f64]) -> f64 {
        let p = self.block.nrows();
        assert_eq!(diff.len(), self.dim(), "difference vector has wrong length");
        diff.chunks(p)
            .map(|chunk| {
                let v = DVector::from_column_slice(chunk);
                (v.transpose() * &self.block * &v)[(0, 0)]
            })
            .sum()
    }
}

pub fn implied_inverse_length_scale(
    w: &MidasWeightMatrix,
    lambda: f64,
    k: usize,
) -> Result<ImpliedLengthScale> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda must be positive and finite"));
    }
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let mut block = &w.values * w.values.transpose() * lambda;
    crate::linalg::symmetrize(&mut block);
    Ok(ImpliedLengthScale { block, k, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn bridge_is_equal_weights() {
        let w = build_weight_matrix(Scheme::Bridge, 12, 0, 3, None).unwrap();
        assert_eq!(w.values.shape(), (12, 1));
        assert!(w.values.iter().all(|&v| v == 1.0 / 12.0));
    }

    #[test]
    fn xalm_zero_theta_is_equal_weights() {
        let w = build_weight_matrix(Scheme::ExpAlmon, 4, 0, 3, Some((0.0, 0.0))).unwrap();
        for v in w.values.iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn xalm_zero_theta_reproduces_bridge() {
        let x = build_weight_matrix(Scheme::ExpAlmon, 12, 0, 3, Some((0.0, 0.0))).unwrap();
        let b = build_weight_matrix(Scheme::Bridge, 12, 0, 3, None).unwrap();
        assert_eq!(x.values, b.values);
    }

    #[test]
    fn unrestricted_is_identity() {
        let w = build_weight_matrix(Scheme::Unrestricted, 3, 0, 3, None).unwrap();
        assert_eq!(w.values, DMatrix::identity(3, 3));
    }

    #[test]
    fn legendre_two_lags_degree_one() {
        let w = build_weight_matrix(Scheme::Legendre, 2, 1, 3, None).unwrap();
        assert_eq!(w.values.column(0).as_slice(), &[1.0, 1.0]);
        assert_eq!(w.values.column(1).as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn legendre_recurrence_matches_closed_form() {
        for (x, expected) in [(-1.0, 1.0), (0.0, -0.5), (1.0, 1.0)] {
            assert_abs_diff_eq!(legendre_values(x, 2)[2], expected, epsilon = 1e-15);
        }
        // P_3(x) = (5x^3 - 3x) / 2
        let x: f64 = 0.3;
        assert_abs_diff_eq!(
            legendre_values(x, 3)[3],
            (5.0 * x.powi(3) - 3.0 * x) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn bernstein_endpoint_row_and_partition_of_unity() {
        let w = build_weight_matrix(Scheme::Bernstein, 12, 3, 3, None).unwrap();
        assert_eq!(w.values.row(0).iter().cloned().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        for r in 0..12 {
            assert_abs_diff_eq!(w.values.row(r).sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn almon_and_fourier_shapes() {
        let a = build_weight_matrix(Scheme::Almon, 12, 3, 3, None).unwrap();
        assert_eq!(a.values.shape(), (12, 4));
        assert_abs_diff_eq!(a.values[(11, 3)], 1.0);
        let f = build_weight_matrix(Scheme::Fourier, 12, 3, 3, None).unwrap();
        assert_eq!(f.values.shape(), (12, 4));
        let freq = 2.0 * std::f64::consts::PI / 9.0;
        assert_abs_diff_eq!(f.values[(5, 1)], (freq * 5.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(f.values[(5, 2)], (2.0 * freq * 5.0).sin(), epsilon = 1e-15);
    }

    #[test]
    fn error_paths() {
        assert!(build_weight_matrix(Scheme::ExpAlmon, 12, 0, 3, None).is_err());
        assert!(build_weight_matrix(Scheme::Bridge, 12, 0, 3, Some((0.0, 0.0))).is_err());
        assert!(build_weight_matrix(Scheme::Legendre, 12, 0, 3, None).is_err());
        assert!(build_weight_matrix(Scheme::Almon, 1, 2, 3, None).is_err());
        assert!(build_weight_matrix(Scheme::Bridge, 0, 0, 3, None).is_err());
        assert!("spline".parse::<Scheme>().is_err());
    }

    #[test]
    fn implied_metric_examples() {
        let br = build_weight_matrix(Scheme::Bridge, 12, 0, 3, None).unwrap();
        let l = implied_inverse_length_scale(&br, 1.0, 1).unwrap();
        for v in l.block.iter() {
            assert_abs_diff_eq!(*v, 1.0 / 144.0, epsilon = 1e-15);
        }
        let u = build_weight_matrix(Scheme::Unrestricted, 3, 0, 3, None).unwrap();
        let l = implied_inverse_length_scale(&u, 2.0, 2).unwrap();
        assert_eq!(l.to_dense(), DMatrix::identity(6, 6) * 2.0);
        let x = build_weight_matrix(Scheme::ExpAlmon, 2, 0, 3, Some((0.0, 0.0))).unwrap();
        let l = implied_inverse_length_scale(&x, 1.0, 1).unwrap();
        assert!(l.block.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(implied_inverse_length_scale(&x, 0.0, 1).is_err());
        assert!(implied_inverse_length_scale(&x, 1.0, 0).is_err());
    }

    #[test]
    fn every_scheme_gives_finite_psd_cross_product() {
        for scheme in Scheme::ALL {
            let theta = (scheme == Scheme::ExpAlmon).then_some((0.3, -0.05));
            let w = build_weight_matrix(scheme, 12, 5, 3, theta).unwrap();
            assert!(w.values.iter().all(|v| v.is_finite()));
            let wwt = &w.values * w.values.transpose();
            let eig = wwt.symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10), "{scheme}");
        }
    }

    proptest! {
        #[test]
        fn xalm_weights_sum_to_one(t1 in -5.0f64..5.0, t2 in -5.0f64..5.0) {
            let w = build_weight_matrix(Scheme::ExpAlmon, 12, 0, 3, Some((t1, t2))).unwrap();
            prop_assert!(w.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
            prop_assert!((w.values.sum() - 1.0).abs() < 1e-12);
        }
    }
}
