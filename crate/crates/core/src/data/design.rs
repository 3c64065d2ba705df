//! Pseudo-real-time MIDAS design matrices.
//!
//! For target period `t` at horizon `h` (in steps of `1/m`) the lag vector of
//! predictor `k` holds the `P_H` most recent high-frequency values released by
//! the forecast origin, most recent first:
//! `z[m t + m - 1 - h_steps - delay_k - r]`, `r = 0..P_H-1`.
//! Low-frequency lags are `y[t - 1 - floor(h) - j]`, `j = 0..P_L-1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::panel::{Horizon, MixedFrequencyPanel};
use crate::error::{Error, Result};
use crate::midas_basis::MidasWeightMatrix;

/// Default publication delay of a high-frequency series.
pub const DEFAULT_RELEASE_LAG: usize = 1;

fn first_feasible_hf(h: Horizon, p_h: usize, delay: usize) -> usize {
    let need = (h.steps + delay + p_h) as isize - h.m as isize;
    if need <= 0 {
        0
    } else {
        (need as usize).div_ceil(h.m)
    }
}

/// High-frequency lag vector with an explicit publication delay.
pub fn hf_lag_vector(
    z_k: &[f64],
    t: usize,
    h: Horizon,
    p_h: usize,
    delay: usize,
) -> Result<Vec<f64>> {
    let m = h.m;
    let first = first_feasible_hf(h, p_h, delay);
    if t < first {
        return Err(Error::InsufficientHistory { first_feasible: first });
    }
    let newest = m * t + m - 1 - h.steps - delay;
    if newest >= z_k.len() {
        return Err(Error::invalid(format!(
            "period {t} lies beyond the high-frequency sample ({} periods)",
            z_k.len()
        )));
    }
    Ok((0..p_h).map(|r| z_k[newest - r]).collect())
}

/// High-frequency lag vector under the default one-period publication delay.
pub fn build_hf_lag_vector(z_k: &[f64], t: usize, h: Horizon, p_h: usize) -> Result<Vec<f64>> {
    hf_lag_vector(z_k, t, h, p_h, DEFAULT_RELEASE_LAG)
}

/// Raw (uncompressed, unstandardised) lag data for a set of target periods.
#[derive(Debug, Clone)]
pub struct MidasSample {
    pub periods: Vec<usize>,
    pub horizon: Horizon,
    pub p_l: usize,
    pub p_h: usize,
    pub names: Vec<String>,
    /// Target values; `NaN` where not (yet) observed.
    pub y: DVector<f64>,
    pub y_lags: DMatrix<f64>,
    /// One `n x P_H` block per predictor.
    pub hf_lags: Vec<DMatrix<f64>>,
}

impl MidasSample {
    /// Every period of `panel` for which all lags exist and are finite.
    pub fn from_panel(
        panel: &MixedFrequencyPanel,
        p_l: usize,
        p_h: usize,
        h: Horizon,
    ) -> Result<Self> {
        if h.m != panel.m {
            return Err(Error::invalid("horizon ratio differs from panel ratio"));
        }
        if p_h == 0 && panel.k() > 0 {
            return Err(Error::invalid("P_H must be at least 1"));
        }
        let shift = h.lf_periods();
        let cols: Vec<Vec<f64>> = (0..panel.k()).map(|k| panel.predictor(k)).collect();
        let mut periods = Vec::new();
        let mut y = Vec::new();
        let mut ylag_rows: Vec<Vec<f64>> = Vec::new();
        let mut hf_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); panel.k()];
        'periods: for t in 0..panel.t_l() {
            if p_l > 0 && t < shift + p_l {
                continue;
            }
            let lags: Vec<f64> = (0..p_l).map(|j| panel.y[t - 1 - shift - j]).collect();
            if lags.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let mut blocks = Vec::with_capacity(panel.k());
            for (k, col) in cols.iter().enumerate() {
                match hf_lag_vector(col, t, h, p_h, panel.release_lag[k]) {
                    Ok(v) if v.iter().all(|x| x.is_finite()) => blocks.push(v),
                    _ => continue 'periods,
                }
            }
            periods.push(t);
            y.push(panel.y[t]);
            ylag_rows.push(lags);
            for (k, b) in blocks.into_iter().enumerate() {
                hf_rows[k].push(b);
            }
        }
        if periods.is_empty() {
            return Err(Error::data("no period has complete lag information"));
        }
        let n = periods.len();
        let y_lags = DMatrix::from_fn(n, p_l, |i, j| ylag_rows[i][j]);
        let hf_lags = hf_rows
            .into_iter()
            .map(|rows| DMatrix::from_fn(n, p_h, |i, r| rows[i][r]))
            .collect();
        Ok(MidasSample {
            periods,
            horizon: h,
            p_l,
            p_h,
            names: panel.names.clone(),
            y: DVector::from_vec(y),
            y_lags,
            hf_lags,
        })
    }

    pub fn n(&self) -> usize {
        self.periods.len()
    }

    pub fn k(&self) -> usize {
        self.hf_lags.len()
    }

    pub fn ncols(&self, w: &MidasWeightMatrix) -> usize {
        self.p_l + self.k() * w.ncols()
    }

    /// `[y lags | Z_1 W | ... | Z_K W]`.
    pub fn compress(&self, w: &MidasWeightMatrix) -> DMatrix<f64> {
        let n = self.n();
        let c = w.ncols();
        let mut x = DMatrix::zeros(n, self.ncols(w));
        x.view_mut((0, 0), (n, self.p_l)).copy_from(&self.y_lags);
        for (k, block) in self.hf_lags.iter().enumerate() {
            let xb = block * &w.values;
            x.view_mut((0, self.p_l + k * c), (n, c)).copy_from(&xb);
        }
        x
    }

    /// Raw stacked lags `[Z_1 | ... | Z_K]` (no LF lags).
    pub fn raw_hf_stack(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut z = DMatrix::zeros(n, self.k() * self.p_h);
        for (k, block) in self.hf_lags.iter().enumerate() {
            z.view_mut((0, k * self.p_h), (n, self.p_h)).copy_from(block);
        }
        z
    }

    pub fn column_names(&self, w: &MidasWeightMatrix) -> Vec<String> {
        let mut out: Vec<String> = (1..=self.p_l).map(|j| format!("y.lag{j}")).collect();
        for name in &self.names {
            for c in 0..w.ncols() {
                out.push(format!("{name}.{}{c}", w.scheme));
            }
        }
        out
    }

    /// Underlying variable of each design column (`y` for autoregressive lags).
    pub fn column_variables(&self, w: &MidasWeightMatrix) -> Vec<String> {
        let mut out = vec!["y".to_string(); self.p_l];
        for name in &self.names {
            out.extend(std::iter::repeat_n(name.clone(), w.ncols()));
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> MidasSample {
        let take = |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)]);
        MidasSample {
            periods: rows.iter().map(|&r| self.periods[r]).collect(),
            horizon: self.horizon,
            p_l: self.p_l,
            p_h: self.p_h,
            names: self.names.clone(),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r])),
            y_lags: take(&self.y_lags),
            hf_lags: self.hf_lags.iter().map(take).collect(),
        }
    }

    pub fn row_of_period(&self, t: usize) -> Option<usize> {
        self.periods.iter().position(|&p| p == t)
    }

    /// Rows usable for training when predicting period `target` at this
    /// horizon: the target must have been observed by the origin.
    pub fn training_rows_for(&self, target: usize) -> Vec<usize> {
        let last = target.checked_sub(1 + self.horizon.lf_periods());
        (0..self.n())
            .filter(|&i| {
                last.is_some_and(|l| self.periods[i] <= l) && self.y[i].is_finite()
            })
            .collect()
    }
}

/// Column-wise centring and scaling learned on a training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_sd: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count();
    let mean = v.clone().sum::<f64>() / n as f64;
    let var = if n > 1 {
        v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let sd = var.sqrt();
    // Constant columns are centred but left unscaled.
    (mean, if sd > 1e-12 && sd.is_finite() { sd } else { 1.0 })
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        let (x_mean, x_sd) = fit_columns(x);
        let (y_mean, y_sd) = mean_sd(y.iter().cloned());
        Standardizer { x_mean, x_sd, y_mean, y_sd }
    }

    pub fn x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        apply_columns(x, &self.x_mean, &self.x_sd)
    }

    pub fn y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| (v - self.y_mean) / self.y_sd)
    }

    pub fn y_inverse(&self, v: f64) -> f64 {
        self.y_mean + self.y_sd * v
    }
}

pub fn fit_columns(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    (0..x.ncols()).map(|j| mean_sd(x.column(j).iter().cloned())).unzip()
}

pub fn apply_columns(x: &DMatrix<f64>, mean: &[f64], sd: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - mean[j]) / sd[j])
}

/// Standardised design for one weighting scheme.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub raw_x: DMatrix<f64>,
    pub horizon: Horizon,
    pub standardizer: Standardizer,
    pub periods: Vec<usize>,
    pub column_names: Vec<String>,
    pub column_variables: Vec<String>,
    /// Fewer observations than regressors.
    pub underdetermined: bool,
}

impl DesignMatrix {
    pub fn from_sample(sample: &MidasSample, w: &MidasWeightMatrix) -> Result<Self> {
        if sample.k() > 0 && w.p_h != sample.p_h {
            return Err(Error::invalid(format!(
                "weight matrix has P_H = {} but sample has {}",
                w.p_h, sample.p_h
            )));
        }
        if sample.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("training sample contains unobserved targets"));
        }
        let n = sample.n();
        if n <= sample.p_l {
            return Err(Error::data(format!(
                "only {n} usable periods for {} autoregressive lags",
                sample.p_l
            )));
        }
        let raw_x = sample.compress(w);
        let standardizer = Standardizer::fit(&raw_x, &sample.y);
        let underdetermined = n < raw_x.ncols();
        if underdetermined {
            log::warn!("design has {n} rows and {} columns", raw_x.ncols());
        }
        Ok(DesignMatrix {
            x: standardizer.x(&raw_x),
            y: standardizer.y(&sample.y),
            raw_x,
            horizon: sample.horizon,
            standardizer,
            periods: sample.periods.clone(),
            column_names: sample.column_names(w),
            column_variables: sample.column_variables(w),
            underdetermined,
        })
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }
}

/// Standardised design over every period with an observed target.
pub fn assemble_design(
    panel: &MixedFrequencyPanel,
    w: &MidasWeightMatrix,
    p_l: usize,
    p_h: usize,
    h: Horizon,
) -> Result<DesignMatrix> {
    if panel.k() > 0 && w.p_h != p_h {
        return Err(Error::invalid("weight matrix P_H differs from requested P_H"));
    }
    let sample = MidasSample::from_panel(panel, p_l, p_h, h)?;
    let observed: Vec<usize> = (0..sample.n()).filter(|&i| sample.y[i].is_finite()).collect();
    DesignMatrix::from_sample(&sample.select_rows(&observed), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midas_basis::{build_weight_matrix, Scheme};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn counter_panel(t_l: usize, k: usize) -> MixedFrequencyPanel {
        let m = 3;
        let z = DMatrix::from_fn(t_l * m, k, |s, c| s as f64 + 1000.0 * c as f64);
        let y = (0..t_l).map(|t| (t as f64).sin()).collect();
        let names = (0..k).map(|c| format!("z{c}")).collect();
        MixedFrequencyPanel::new(y, z, m, names).unwrap()
    }

    #[test]
    fn nowcast_lags_skip_unreleased_month() {
        let z: Vec<f64> = (0..60).map(|s| s as f64).collect();
        let v = build_hf_lag_vector(&z, 10, Horizon::nowcast(3), 3).unwrap();
        // t - 1/3, t - 2/3, t - 1 in high-frequency index units
        assert_eq!(v, vec![31.0, 30.0, 29.0]);
    }

    #[test]
    fn one_quarter_ahead_shifts_by_m() {
        let z: Vec<f64> = (0..60).map(|s| s as f64).collect();
        let h0 = build_hf_lag_vector(&z, 10, Horizon::new(0, 3), 4).unwrap();
        let h1 = build_hf_lag_vector(&z, 10, Horizon::new(3, 3), 4).unwrap();
        assert!(h0.iter().zip(&h1).all(|(a, b)| a - b == 3.0));
        let single = build_hf_lag_vector(&z, 10, Horizon::new(0, 3), 1).unwrap();
        assert_eq!(single, vec![31.0]);
    }

    #[test]
    fn insufficient_history_reports_first_feasible() {
        let z: Vec<f64> = (0..60).map(|s| s as f64).collect();
        match build_hf_lag_vector(&z, 2, Horizon::nowcast(3), 12) {
            Err(Error::InsufficientHistory { first_feasible }) => assert_eq!(first_feasible, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_hf_lag_vector(&z, 4, Horizon::nowcast(3), 12).is_ok());
    }

    #[test]
    fn column_counts() {
        let p = counter_panel(40, 1);
        let br = build_weight_matrix(Scheme::Bridge, 12, 0, 3, None).unwrap();
        let d = assemble_design(&p, &br, 4, 12, Horizon::nowcast(3)).unwrap();
        assert_eq!(d.ncols(), 5);

        let p = counter_panel(40, 12);
        let leg = build_weight_matrix(Scheme::Legendre, 12, 3, 3, None).unwrap();
        let d = assemble_design(&p, &leg, 4, 12, Horizon::nowcast(3)).unwrap();
        assert_eq!(d.ncols(), 4 + 12 * 4);
        assert_eq!(d.column_names.len(), 52);

        let p = counter_panel(20, 116);
        let u = build_weight_matrix(Scheme::Unrestricted, 12, 0, 3, None).unwrap();
        let d = assemble_design(&p, &u, 4, 12, Horizon::nowcast(3)).unwrap();
        assert_eq!(d.ncols(), 1396);
        assert!(d.underdetermined);
    }

    #[test]
    fn standardised_columns_have_zero_mean_unit_sd() {
        let mut p = counter_panel(60, 3);
        for (i, v) in p.z.iter_mut().enumerate() {
            *v = ((i * 7919) % 101) as f64 / 10.0;
        }
        let w = build_weight_matrix(Scheme::Almon, 12, 2, 3, None).unwrap();
        let d = assemble_design(&p, &w, 4, 12, Horizon::nowcast(3)).unwrap();
        for j in 0..d.ncols() {
            let col: Vec<f64> = d.x.column(j).iter().cloned().collect();
            assert_abs_diff_eq!(crate::linalg::mean(&col), 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(crate::linalg::variance(&col).sqrt(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn horizon_step_shifts_hf_blocks_one_period() {
        let p = counter_panel(30, 2);
        let s0 = MidasSample::from_panel(&p, 4, 12, Horizon::new(1, 3)).unwrap();
        let s1 = MidasSample::from_panel(&p, 4, 12, Horizon::new(2, 3)).unwrap();
        for (i, &t) in s1.periods.iter().enumerate() {
            let i0 = s0.row_of_period(t).unwrap();
            for k in 0..2 {
                for r in 0..11 {
                    assert_eq!(s1.hf_lags[k][(i, r)], s0.hf_lags[k][(i0, r + 1)]);
                }
            }
        }
    }

    #[test]
    fn compression_commutes_with_stacking() {
        let mut p = counter_panel(30, 3);
        for (i, v) in p.z.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).cos();
        }
        let s = MidasSample::from_panel(&p, 4, 12, Horizon::nowcast(3)).unwrap();
        let u = build_weight_matrix(Scheme::Unrestricted, 12, 0, 3, None).unwrap();
        let w = build_weight_matrix(Scheme::Fourier, 12, 3, 3, None).unwrap();
        let xu = s.compress(&u);
        let xw = s.compress(&w);
        for k in 0..3 {
            let block = xu.view((0, 4 + 12 * k), (s.n(), 12)) * &w.values;
            let direct = xw.view((0, 4 + 4 * k), (s.n(), 4));
            assert!((block - direct).abs().max() < 1e-12);
        }
    }

    #[test]
    fn training_rows_respect_horizon() {
        let p = counter_panel(30, 1);
        let s = MidasSample::from_panel(&p, 4, 12, Horizon::new(3, 3)).unwrap();
        let rows = s.training_rows_for(20);
        assert!(rows.iter().all(|&r| s.periods[r] <= 18));
        assert!(rows.iter().any(|&r| s.periods[r] == 18));
    }

    #[test]
    fn too_short_sample_is_rejected() {
        let p = counter_panel(7, 1);
        let br = build_weight_matrix(Scheme::Bridge, 12, 0, 3, None).unwrap();
        assert!(assemble_design(&p, &br, 4, 12, Horizon::nowcast(3)).is_err());
    }

    proptest! {
        #[test]
        fn standardisation_round_trips(ys in proptest::collection::vec(-1e3f64..1e3, 3..40)) {
            let y = DVector::from_vec(ys.clone());
            let x = DMatrix::from_fn(ys.len(), 1, |i, _| i as f64);
            let st = Standardizer::fit(&x, &y);
            let z = st.y(&y);
            for (a, b) in z.iter().zip(ys.iter()) {
                prop_assert!((st.y_inverse(*a) - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
