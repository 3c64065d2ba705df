//! Synthetic mixed-frequency data: independent AR(1) monthly predictors
//! compressed with exponential Almon weights, feeding an ADL target.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{hf_lag_vector, Horizon, MidasSample, MixedFrequencyPanel};
use crate::error::{Error, Result};
use crate::evaluation::{forecast_losses, LossRecord, LossTable};
use crate::midas_basis::{build_weight_matrix, Scheme};
use crate::rng::{label_id, stream};
use crate::sampler::{draw_predictive, run_chain, ModelConfig};

/// High-frequency periods simulated and discarded before the sample.
pub const HF_BURN_IN: usize = 200;
/// Number of relevant predictors.
pub const ACTIVE_PREDICTORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionalForm {
    Nonlinear,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightShape {
    Fast,
    Hump,
    Equal,
}

impl WeightShape {
    pub fn theta(self) -> (f64, f64) {
        match self {
            WeightShape::Fast => (0.0, -0.1),
            WeightShape::Hump => (0.5, -0.05),
            WeightShape::Equal => (0.0, 0.0),
        }
    }

    fn code(self) -> &'static str {
        match self {
            WeightShape::Fast => "fast",
            WeightShape::Hump => "hump",
            WeightShape::Equal => "eq",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub form: FunctionalForm,
    pub weights: WeightShape,
    pub k: usize,
    pub rho_z: f64,
    pub rho_y: f64,
    pub sigma2: f64,
    pub t_l: usize,
    pub p_h: usize,
    pub m: usize,
}

impl DgpSpec {
    pub fn new(form: FunctionalForm, weights: WeightShape, k: usize) -> Self {
        DgpSpec { form, weights, k, rho_z: 0.3, rho_y: 0.3, sigma2: 0.5, t_l: 250, p_h: 12, m: 3 }
    }

    /// The twelve standard designs.
    pub fn all() -> Vec<DgpSpec> {
        let mut out = Vec::new();
        for form in [FunctionalForm::Nonlinear, FunctionalForm::Linear] {
            for w in [WeightShape::Fast, WeightShape::Hump, WeightShape::Equal] {
                for k in [10, 25] {
                    out.push(DgpSpec::new(form, w, k));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < ACTIVE_PREDICTORS {
            return Err(Error::config(format!("DGP needs at least {ACTIVE_PREDICTORS} predictors")));
        }
        if self.t_l < 10 || self.p_h == 0 || self.m == 0 {
            return Err(Error::config("DGP needs T_L >= 10, P_H >= 1 and m >= 1"));
        }
        if !(self.rho_z.abs() < 1.0 && self.rho_y.abs() < 1.0 && self.sigma2 > 0.0) {
            return Err(Error::config("DGP needs stationary AR coefficients and positive variance"));
        }
        Ok(())
    }

    /// Low-frequency periods preceding the first usable target so that a
    /// model with `p_l` lags has exactly `t_l` training rows.
    pub fn presample(&self, p_l: usize) -> usize {
        let hf = (self.p_h + 1).saturating_sub(self.m).div_ceil(self.m);
        p_l.max(hf)
    }
}

/// Labels like `NL-fast-K10`.
impl fmt::Display for DgpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match self.form {
            FunctionalForm::Nonlinear => "NL",
            FunctionalForm::Linear => "L",
        };
        write!(f, "{form}-{}-K{}", self.weights.code(), self.k)
    }
}

impl FromStr for DgpSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('-').collect();
        let bad = || Error::config(format!("unknown DGP '{s}' (expected e.g. NL-fast-K10)"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let form = match parts[0] {
            "NL" => FunctionalForm::Nonlinear,
            "L" => FunctionalForm::Linear,
            _ => return Err(bad()),
        };
        let w = match parts[1] {
            "fast" => WeightShape::Fast,
            "hump" => WeightShape::Hump,
            "eq" => WeightShape::Equal,
            _ => return Err(bad()),
        };
        let k = parts[2].strip_prefix('K').and_then(|k| k.parse().ok()).ok_or_else(bad)?;
        let spec = DgpSpec::new(form, w, k);
        spec.validate()?;
        Ok(spec)
    }
}

/// Coefficients of the mean function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanCoefficients {
    /// `(beta1, beta2, beta3)`.
    Nonlinear([f64; 3]),
    Linear([f64; ACTIVE_PREDICTORS]),
}

impl MeanCoefficients {
    pub fn draw<R: Rng + ?Sized>(form: FunctionalForm, rng: &mut R) -> Self {
        match form {
            FunctionalForm::Nonlinear => {
                let b1 = rng.sample(Uniform::new(0.0, 1.0).unwrap());
                let u = Uniform::new(-2.0, 2.0).unwrap();
                MeanCoefficients::Nonlinear([b1, u.sample(rng), u.sample(rng)])
            }
            FunctionalForm::Linear => {
                let n = Normal::new(0.0, 0.5).unwrap();
                MeanCoefficients::Linear(std::array::from_fn(|_| n.sample(rng)))
            }
        }
    }

    /// `f(x)` on compressed predictors; only the first five enter.
    pub fn mean(&self, x: &[f64]) -> f64 {
        match self {
            MeanCoefficients::Nonlinear([b1, b2, b3]) => {
                b1 * (std::f64::consts::PI * x[0] * x[1]).sin()
                    + 2.0 * b1 * (x[2] - 0.5).powi(2)
                    + b2 * x[3]
                    + b3 * x[4]
            }
            MeanCoefficients::Linear(b) => b.iter().zip(x).map(|(b, x)| b * x).sum(),
        }
    }
}

/// Everything needed to score a replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub spec: DgpSpec,
    pub theta: (f64, f64),
    pub lag_weights: Vec<f64>,
    pub coefficients: MeanCoefficients,
    /// `f(x_t)` for every low-frequency period of the panel.
    pub mean_values: Vec<f64>,
    /// Index of the held-out period (the last one).
    pub holdout_period: usize,
    pub holdout_value: f64,
    /// Conditional mean of the held-out target given its lags and predictors.
    pub holdout_mean: f64,
}

/// Simulate a panel of `presample + t_l + 1` low-frequency periods; the last
/// one is held out.
pub fn simulate_dgp<R: Rng + ?Sized>(spec: &DgpSpec, p_l: usize, rng: &mut R) -> Result<(MixedFrequencyPanel, DgpTruth)> {
    let coefficients = MeanCoefficients::draw(spec.form, rng);
    simulate_dgp_with(spec, p_l, coefficients, rng)
}

/// As [`simulate_dgp`] with given coefficients.
pub fn simulate_dgp_with<R: Rng + ?Sized>(
    spec: &DgpSpec,
    p_l: usize,
    coefficients: MeanCoefficients,
    rng: &mut R,
) -> Result<(MixedFrequencyPanel, DgpTruth)> {
    spec.validate()?;
    let pre = spec.presample(p_l);
    let n_lf = pre + spec.t_l + 1;
    let (m, k) = (spec.m, spec.k);
    let n_hf = m * n_lf;
    let total = HF_BURN_IN + n_hf;
    let mut z = DMatrix::zeros(n_hf, k);
    // Burn-in rows also serve as lag history for the earliest periods.
    let mut full = vec![vec![0.0; total]; k];
    for series in full.iter_mut() {
        let mut prev = 0.0;
        for v in series.iter_mut() {
            prev = spec.rho_z * prev + rng.sample::<f64, _>(StandardNormal);
            *v = prev;
        }
    }
    for (c, series) in full.iter().enumerate() {
        for r in 0..n_hf {
            z[(r, c)] = series[HF_BURN_IN + r];
        }
    }
    let theta = spec.weights.theta();
    let w = build_weight_matrix(Scheme::ExpAlmon, spec.p_h, 0, m, Some(theta))?;
    let weights: Vec<f64> = w.values.column(0).iter().copied().collect();
    let h = Horizon::new(0, m);
    let burn_lf = HF_BURN_IN / m;
    let offset = HF_BURN_IN - burn_lf * m;
    let mut y = vec![0.0; n_lf];
    let mut mean_values = vec![0.0; n_lf];
    let sd = spec.sigma2.sqrt();
    let mut prev_y = 0.0;
    for t in 0..n_lf {
        // Period t of the panel is period burn_lf + t of the padded series.
        let mut x = vec![0.0; ACTIVE_PREDICTORS];
        for (j, xj) in x.iter_mut().enumerate() {
            let lags = hf_lag_vector(&full[j][offset..], burn_lf + t, h, spec.p_h, 1)?;
            *xj = lags.iter().zip(&weights).map(|(a, b)| a * b).sum();
        }
        mean_values[t] = coefficients.mean(&x);
        y[t] = spec.rho_y * prev_y + mean_values[t] + sd * rng.sample::<f64, _>(StandardNormal);
        prev_y = y[t];
    }
    let holdout_period = n_lf - 1;
    let holdout_mean = spec.rho_y * y[holdout_period - 1] + mean_values[holdout_period];
    let names = (1..=k).map(|i| format!("z{i}")).collect();
    let panel = MixedFrequencyPanel::new(y.clone(), z, m, names)?;
    Ok((
        panel,
        DgpTruth {
            spec: *spec,
            theta,
            lag_weights: weights,
            coefficients,
            mean_values,
            holdout_period,
            holdout_value: y[holdout_period],
            holdout_mean,
        },
    ))
}

/// Training and held-out samples of a simulated panel.
pub fn split_holdout(panel: &MixedFrequencyPanel, truth: &DgpTruth, p_l: usize, p_h: usize) -> Result<(MidasSample, MidasSample)> {
    let all = MidasSample::from_panel(panel, p_l, p_h, Horizon::new(0, panel.m))?;
    let test_row = all
        .row_of_period(truth.holdout_period)
        .ok_or_else(|| Error::data("held-out period has no complete lag information"))?;
    let train_rows: Vec<usize> = (0..all.n()).filter(|&i| i != test_row).collect();
    Ok((all.select_rows(&train_rows), all.select_rows(&[test_row])))
}

/// Outcome of one (DGP, model, replication) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub dgp: String,
    pub model: String,
    pub replication: usize,
    pub crps: Option<f64>,
    pub mae: Option<f64>,
    /// Posterior mean lag weights for exponential Almon models.
    pub lag_weights: Option<Vec<f64>>,
    pub error: Option<String>,
}

/// Averaged losses per (DGP, model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub dgp: String,
    pub model: String,
    pub mean_crps: f64,
    pub mean_mae: f64,
    pub crps_ratio: f64,
    pub mae_ratio: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// More than 5% of replications failed.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub benchmark: String,
    pub outcomes: Vec<ReplicationOutcome>,
    pub cells: Vec<StudyCell>,
}

impl StudyResult {
    pub fn cell(&self, dgp: &str, model: &str) -> Option<&StudyCell> {
        self.cells.iter().find(|c| c.dgp == dgp && c.model == model)
    }

    /// Long-format table of replication losses (origin = replication).
    pub fn loss_table(&self) -> LossTable {
        let mut t = LossTable::default();
        for o in &self.outcomes {
            for (metric, v) in [("CRPS", o.crps), ("MAE", o.mae)] {
                if let Some(v) = v {
                    t.push(LossRecord {
                        model: o.model.clone(),
                        origin: format!("{}#{}", o.dgp, o.replication),
                        h: "0".into(),
                        subsample: "Full".into(),
                        metric: metric.into(),
                        value: v,
                    });
                }
            }
        }
        t
    }

    /// Grid CSV: one row per DGP, one column per model, CRPS ratios to the
    /// benchmark (absolute values in the benchmark column).
    pub fn grid_csv(&self, metric: &str) -> String {
        let mut dgps: Vec<&str> = Vec::new();
        let mut models: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !dgps.contains(&c.dgp.as_str()) {
                dgps.push(&c.dgp);
            }
            if !models.contains(&c.model.as_str()) {
                models.push(&c.model);
            }
        }
        let mut out = format!("dgp,{}\n", models.join(","));
        for d in dgps {
            out.push_str(d);
            for m in &models {
                let v = self.cell(d, m).map_or(f64::NAN, |c| {
                    let (abs, ratio) = if metric == "MAE" { (c.mean_mae, c.mae_ratio) } else { (c.mean_crps, c.crps_ratio) };
                    if *m == self.benchmark { abs } else { ratio }
                });
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Fit and score one replication for every model.
fn run_replication(
    spec: &DgpSpec,
    models: &[ModelConfig],
    seed: u64,
    rep: usize,
) -> Vec<ReplicationOutcome> {
    let dgp = spec.to_string();
    let dgp_id = label_id(&dgp);
    let mut data_rng = stream(seed, &[dgp_id, rep as u64, 0]);
    let p_l = models.first().map_or(4, |c| c.p_l);
    let sim = simulate_dgp(spec, p_l, &mut data_rng);
    models
        .iter()
        .map(|cfg| {
            let model = cfg.label();
            let res: Result<(f64, f64, Option<Vec<f64>>)> = (|| {
                let (panel, truth) = sim.as_ref().map_err(|e| Error::data(e.to_string()))?;
                let (train, test) = split_holdout(panel, truth, cfg.p_l, cfg.p_h)?;
                let mut rng = stream(seed, &[dgp_id, rep as u64, 1, label_id(&model)]);
                let draws = run_chain(cfg, &train, Some(&test), &mut rng)?;
                let pred = draw_predictive(&draws, 0, None, &mut rng)?;
                let losses = forecast_losses(&pred.draws, truth.holdout_value)?;
                let get = |k: &str| losses.iter().find(|(n, _)| n == k).map(|x| x.1).unwrap_or(f64::NAN);
                Ok((get("CRPS"), get("MAE"), draws.posterior_lag_weights()))
            })();
            match res {
                Ok((crps, mae, lag_weights)) => ReplicationOutcome {
                    dgp: dgp.clone(),
                    model,
                    replication: rep,
                    crps: Some(crps),
                    mae: Some(mae),
                    lag_weights,
                    error: None,
                },
                Err(e) => {
                    log::warn!("{dgp} replication {rep} model {model}: {e}");
                    ReplicationOutcome {
                        dgp: dgp.clone(),
                        model,
                        replication: rep,
                        crps: None,
                        mae: None,
                        lag_weights: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}

/// Replication study over `specs x models`; `benchmark` names the model
/// label that ratios are taken against. Replications run in parallel on the
/// current rayon pool; results do not depend on the pool size.
pub fn run_replication_study(
    specs: &[DgpSpec],
    models: &[ModelConfig],
    replications: usize,
    seed: u64,
    benchmark: &str,
) -> Result<StudyResult> {
    use rayon::prelude::*;
    if models.is_empty() || specs.is_empty() || replications == 0 {
        return Err(Error::config("study needs at least one DGP, model and replication"));
    }
    for m in models {
        m.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|s| (0..replications).map(move |r| (s, r))).collect();
    let outcomes: Vec<ReplicationOutcome> = jobs
        .par_iter()
        .map(|&(s, r)| run_replication(&specs[s], models, seed, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut cells = Vec::new();
    for spec in specs {
        let dgp = spec.to_string();
        let mut row: Vec<StudyCell> = models
            .iter()
            .map(|cfg| {
                let model = cfg.label();
                let os: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.dgp == dgp && o.model == model).collect();
                let ok: Vec<&&ReplicationOutcome> = os.iter().filter(|o| o.error.is_none()).collect();
                let n_ok = ok.len();
                let mean = |f: &dyn Fn(&ReplicationOutcome) -> f64| {
                    if n_ok == 0 { f64::NAN } else { ok.iter().map(|o| f(o)).sum::<f64>() / n_ok as f64 }
                };
                let n_failed = os.len() - n_ok;
                StudyCell {
                    dgp: dgp.clone(),
                    model,
                    mean_crps: mean(&|o| o.crps.unwrap()),
                    mean_mae: mean(&|o| o.mae.unwrap()),
                    crps_ratio: f64::NAN,
                    mae_ratio: f64::NAN,
                    n_ok,
                    n_failed,
                    flagged: n_failed as f64 > 0.05 * os.len() as f64,
                }
            })
            .collect();
        if let Some(b) = row.iter().find(|c| c.model == benchmark).cloned() {
            for c in &mut row {
                c.crps_ratio = c.mean_crps / b.mean_crps;
                c.mae_ratio = c.mean_mae / b.mean_mae;
            }
        }
        cells.extend(row);
    }
    Ok(StudyResult { benchmark: benchmark.to_string(), outcomes, cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip_and_twelve_designs() {
        let all = DgpSpec::all();
        assert_eq!(all.len(), 12);
        for s in &all {
            assert_eq!(&s.to_string().parse::<DgpSpec>().unwrap(), s);
        }
        assert!("NL-slow-K10".parse::<DgpSpec>().is_err());
    }

    #[test]
    fn null_mean_gives_ar1_target() {
        let spec = DgpSpec { t_l: 4000, ..DgpSpec::new(FunctionalForm::Linear, WeightShape::Equal, 10) };
        let mut rng = stream(5, &[]);
        let (panel, truth) = simulate_dgp_with(&spec, 4, MeanCoefficients::Linear([0.0; 5]), &mut rng).unwrap();
        assert!(truth.mean_values.iter().all(|&v| v == 0.0));
        let y = &panel.y;
        let n = y.len() - 1;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for t in 1..=n {
            sxy += y[t] * y[t - 1];
            sxx += y[t - 1] * y[t - 1];
        }
        let rho = sxy / sxx;
        let resid: Vec<f64> = (1..=n).map(|t| y[t] - rho * y[t - 1]).collect();
        let var = crate::linalg::variance(&resid);
        assert!((rho - 0.3).abs() < 0.05, "rho {rho}");
        assert!((var - 0.5).abs() < 0.05, "var {var}");
    }

    #[test]
    fn predictor_autocorrelation() {
        let spec = DgpSpec::new(FunctionalForm::Linear, WeightShape::Fast, 10);
        let mut rng = stream(6, &[]);
        let (panel, _) = simulate_dgp(&spec, 4, &mut rng).unwrap();
        assert!(panel.t_h() >= 750);
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..panel.k() {
            let z = panel.predictor(k);
            let mu = crate::linalg::mean(&z);
            num += z.windows(2).map(|w| (w[0] - mu) * (w[1] - mu)).sum::<f64>();
            den += z.iter().map(|v| (v - mu).powi(2)).sum::<f64>();
        }
        let r = num / den;
        assert!((r - 0.3).abs() < 0.05, "pooled lag-1 autocorrelation {r}");
    }

    #[test]
    fn nonlinear_with_zero_beta1_is_linear() {
        let x = [0.3, -1.2, 0.7, 1.1, -0.4];
        let nl = MeanCoefficients::Nonlinear([0.0, 1.5, -0.5]);
        let l = MeanCoefficients::Linear([0.0, 0.0, 0.0, 1.5, -0.5]);
        assert_eq!(nl.mean(&x), l.mean(&x));
    }

    #[test]
    fn weights_and_sample_sizes_match_spec() {
        let spec = DgpSpec::new(FunctionalForm::Nonlinear, WeightShape::Hump, 25);
        let mut rng = stream(7, &[]);
        let (panel, truth) = simulate_dgp(&spec, 4, &mut rng).unwrap();
        let w = build_weight_matrix(Scheme::ExpAlmon, 12, 0, 3, Some((0.5, -0.05))).unwrap();
        assert_eq!(truth.lag_weights, w.values.column(0).iter().copied().collect::<Vec<_>>());
        let (train, test) = split_holdout(&panel, &truth, 4, 12).unwrap();
        assert_eq!(train.n(), 250);
        assert_eq!(test.n(), 1);
        assert_eq!(test.periods[0], truth.holdout_period);
        assert_eq!(train.k(), 25);
    }

    #[test]
    fn same_seed_same_panel() {
        let spec = DgpSpec::new(FunctionalForm::Nonlinear, WeightShape::Fast, 10);
        let a = simulate_dgp(&spec, 4, &mut stream(8, &[1])).unwrap();
        let b = simulate_dgp(&spec, 4, &mut stream(8, &[1])).unwrap();
        assert_eq!(a.0.y, b.0.y);
        assert_eq!(a.0.z, b.0.z);
        assert_eq!(a.1, b.1);
    }
}
