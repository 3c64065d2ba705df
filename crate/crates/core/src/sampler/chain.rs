use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{MeanModel, ModelConfig, VarianceModel};
use super::draws::{ChainDiagnostics, DrawsHeader, PosteriorDraws};
use crate::bart::{bart_sweep, target_range, BinnedX, Cutpoints, Forest, TreeContext};
use crate::blr::{sample_beta, update_horseshoe, HorseshoeState};
use crate::data::{apply_columns, fit_columns, MidasSample};
use crate::error::{Error, Result};
use crate::gp::{
    ar1_residual_variance, conditional_moments_with_factor, gram_from_sq_dist, matheron_draw, mh_update_kernel_hyper_factored,
    sample_function_values, sq_dist_matrix, AdaptiveStep, KernelData, KernelHyper, KernelPriors, KernelSteps,
};
use crate::linalg::{cholesky_jittered, CholFactor};
use crate::midas_basis::{build_weight_matrix, MidasWeightMatrix, Scheme};
use crate::volatility::{sample_homoskedastic_variance, sample_sv, SvPriors, SvState};

/// Prior `IG(a0, b0)` on the homoskedastic error variance.
pub const HOM_A0: f64 = 0.01;
pub const HOM_B0: f64 = 0.01;
/// Standard deviation of the Gaussian priors on the exponential Almon
/// parameters.
pub const XALM_PRIOR_SD: f64 = 0.1;
/// Share of failed iterations that aborts a chain.
pub const MAX_FAILURE_SHARE: f64 = 0.01;

/// Builds standardized designs, re-deriving compressed columns for each
/// exponential Almon parameter value.
struct Designs<'a> {
    train: &'a MidasSample,
    test: Option<&'a MidasSample>,
    scheme: Scheme,
    degree: usize,
    m: usize,
    p_h: usize,
}

impl Designs<'_> {
    fn weights(&self, theta: Option<(f64, f64)>) -> Result<MidasWeightMatrix> {
        let degree = if self.scheme.is_polynomial() { self.degree } else { 0 };
        build_weight_matrix(self.scheme, self.p_h, degree, self.m, theta)
    }

    /// Standardized `(train, test)` designs; test has zero rows when absent.
    fn build(&self, theta: Option<(f64, f64)>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let w = self.weights(theta)?;
        let raw = self.train.compress(&w);
        let (mean, sd) = fit_columns(&raw);
        let train = apply_columns(&raw, &mean, &sd);
        let test = match self.test {
            Some(t) => apply_columns(&t.compress(&w), &mean, &sd),
            None => DMatrix::zeros(0, raw.ncols()),
        };
        Ok((train, test))
    }
}

enum VarState {
    Hom(f64),
    Sv(SvState),
}

impl VarState {
    fn diag(&self, n: usize) -> DVector<f64> {
        match self {
            VarState::Hom(s2) => DVector::from_element(n, *s2),
            VarState::Sv(s) => DVector::from_iterator(n, s.h.iter().map(|h| h.exp().max(1e-12))),
        }
    }

    fn update<R: Rng + ?Sized>(&mut self, resid: &[f64], rng: &mut R) -> Result<()> {
        match self {
            VarState::Hom(s2) => {
                let v = sample_homoskedastic_variance(resid, HOM_A0, HOM_B0, rng);
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::numerical("error variance draw is not positive"));
                }
                *s2 = v;
                Ok(())
            }
            VarState::Sv(s) => sample_sv(resid, s, &SvPriors::default(), rng),
        }
    }
}

struct GpState {
    hyper: KernelHyper,
    priors: KernelPriors,
    steps: KernelSteps,
    sq_dist: DMatrix<f64>,
    sq_dist_test: DMatrix<f64>,
    sq_dist_tt: DMatrix<f64>,
    /// Cholesky factor of the unit-variance Gram matrix at a given `lambda`.
    unit_factor: Option<(f64, CholFactor)>,
}

impl GpState {
    fn set_inputs(&mut self, x: &DMatrix<f64>, xt: &DMatrix<f64>) -> Result<()> {
        self.sq_dist = sq_dist_matrix(x, x)?;
        self.sq_dist_test = sq_dist_matrix(xt, x)?;
        self.sq_dist_tt = sq_dist_matrix(xt, xt)?;
        self.unit_factor = None;
        Ok(())
    }

    fn log_marginal(&self, sq_dist: &DMatrix<f64>, y: &DVector<f64>, sigma: &DVector<f64>) -> Option<(CholFactor, f64)> {
        KernelData { sq_dist, y, sigma }.evaluate(self.hyper)
    }

    /// Draw `f | y, kappa, Sigma` by perturbing a joint prior draw
    /// (Matheron's rule): `f = f0 + K (K + Sigma)^{-1} (y - f0 - e0)`.
    fn draw_f<R: Rng + ?Sized>(
        &mut self,
        factor: &CholFactor,
        y: &DVector<f64>,
        sigma: &DVector<f64>,
        rng: &mut R,
    ) -> Result<(DVector<f64>, f64)> {
        let lambda = self.hyper.lambda;
        if self.unit_factor.as_ref().is_none_or(|(l, _)| *l != lambda) {
            let k0 = gram_from_sq_dist(&self.sq_dist, KernelHyper { xi: 1.0, lambda });
            self.unit_factor = Some((lambda, cholesky_jittered(&k0)?));
        }
        let (_, l0) = self.unit_factor.as_ref().unwrap();
        let k = gram_from_sq_dist(&self.sq_dist, self.hyper);
        let f = matheron_draw(l0, self.hyper.xi, &k, factor, y, sigma, rng);
        Ok((f, l0.jitter.max(factor.jitter)))
    }

    fn draw_test<R: Rng + ?Sized>(&self, factor: &CholFactor, y: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
        let kc = gram_from_sq_dist(&self.sq_dist_test, self.hyper);
        let kt = gram_from_sq_dist(&self.sq_dist_tt, self.hyper);
        let post = conditional_moments_with_factor(factor, &kc, &kt, y);
        sample_function_values(&post, rng)
    }
}

struct BlrState {
    hs: HorseshoeState,
    beta: DVector<f64>,
}

struct BartState {
    cuts: Cutpoints,
    bins: BinnedX,
    bins_test: BinnedX,
    forest: Forest,
    v_mu: f64,
}

enum MeanState {
    Gp(Box<GpState>),
    Blr(BlrState),
    Bart(Box<BartState>),
}

struct XalmState {
    theta: (f64, f64),
    step: AdaptiveStep,
}

fn xalm_log_prior(theta: (f64, f64)) -> f64 {
    let s2 = XALM_PRIOR_SD * XALM_PRIOR_SD;
    -0.5 * (theta.0 * theta.0 + theta.1 * theta.1) / s2
}

/// Result of one exponential Almon update.
#[derive(Debug, Clone)]
pub struct XalmMove<T> {
    pub theta: (f64, f64),
    pub log_lik: f64,
    /// Payload of the accepted proposal.
    pub accepted: Option<T>,
}

/// Joint Gaussian random-walk update of `(theta1, theta2)` under independent
/// `N(0, XALM_PRIOR_SD^2)` priors.
///
/// `eval` returns the log likelihood at a proposal together with whatever
/// the caller needs to adopt it, or `None` to reject it outright.
pub fn mh_update_xalm<T, R: Rng + ?Sized>(
    theta: (f64, f64),
    current_ll: f64,
    step: &mut AdaptiveStep,
    mut eval: impl FnMut((f64, f64)) -> Option<(f64, T)>,
    rng: &mut R,
) -> XalmMove<T> {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    let prop = (theta.0 + step.scale * z1, theta.1 + step.scale * z2);
    let out = match eval(prop) {
        Some((ll, payload)) if ll.is_finite() || ll == f64::NEG_INFINITY => {
            let lr = ll + xalm_log_prior(prop) - current_ll - xalm_log_prior(theta);
            if lr >= 0.0 || u.ln() < lr {
                XalmMove { theta: prop, log_lik: ll, accepted: Some(payload) }
            } else {
                XalmMove { theta, log_lik: current_ll, accepted: None }
            }
        }
        _ => XalmMove { theta, log_lik: current_ll, accepted: None },
    };
    step.record(out.accepted.is_some());
    out
}

/// Gaussian log likelihood of `y` given fitted values, up to a constant.
fn conditional_ll(y: &DVector<f64>, fit: &[f64], sigma: &DVector<f64>) -> f64 {
    -0.5 * y
        .iter()
        .zip(fit)
        .zip(sigma.iter())
        .map(|((a, b), s)| (a - b) * (a - b) / s)
        .sum::<f64>()
}

/// Columns recorded for each retained draw.
struct Recorder {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Recorder {
    fn new(names: Vec<String>) -> Self {
        let values = vec![Vec::new(); names.len()];
        Recorder { names, values }
    }

    fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.values.len());
        for (c, v) in self.values.iter_mut().zip(row) {
            c.push(*v);
        }
    }
}

/// Run one MCMC chain for `config` on the training sample, recording draws
/// of the conditional mean at the rows of `test` as well.
///
/// Per iteration: error variances given the current fit; for GP, the
/// exponential Almon weights and kernel parameters given the noise with the
/// latent function integrated out, then the function values; for BLR the
/// coefficients, variances, horseshoe scales and Almon weights given the
/// coefficients; for BART a backfitting sweep, variances and Almon weights
/// given the forest.
pub fn run_chain<R: Rng + ?Sized>(
    config: &ModelConfig,
    train: &MidasSample,
    test: Option<&MidasSample>,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let n = train.n();
    if n <= config.p_l + 1 {
        return Err(Error::data(format!("only {n} training periods")));
    }
    if train.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("training sample contains unobserved targets"));
    }
    if train.k() > 0 && train.p_h != config.p_h {
        return Err(Error::invalid("sample P_H differs from configuration"));
    }
    let designs = Designs {
        train,
        test,
        scheme: config.scheme,
        degree: config.degree,
        m: config.m,
        p_h: config.p_h,
    };
    let is_xalm = config.scheme == Scheme::ExpAlmon && train.k() > 0;
    let mut xalm = is_xalm.then(|| XalmState { theta: (0.0, 0.0), step: AdaptiveStep::new(0.05) });
    let theta0 = if config.scheme == Scheme::ExpAlmon { Some((0.0, 0.0)) } else { None };
    let (mut x, mut xt) = designs.build(theta0)?;
    let n_test = xt.nrows();

    let y_mean = train.y.mean();
    let y_sd = {
        let v = train.y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if v > 0.0 { v.sqrt() } else { 1.0 }
    };
    let y = train.y.map(|v| (v - y_mean) / y_sd);

    let mut var = match config.variance {
        VarianceModel::Hom => VarState::Hom(1.0),
        VarianceModel::Sv => VarState::Sv(SvState::new(n, 0.0)),
    };
    let mut mean = match config.mean {
        MeanModel::Gp => {
            let priors = KernelPriors::from_target_variance(ar1_residual_variance(y.as_slice()).min(1.0));
            let mut g = GpState {
                hyper: KernelHyper::new(1.0, priors.b_lambda)?,
                priors,
                steps: KernelSteps::default(),
                sq_dist: DMatrix::zeros(0, 0),
                sq_dist_test: DMatrix::zeros(0, 0),
                sq_dist_tt: DMatrix::zeros(0, 0),
                unit_factor: None,
            };
            g.set_inputs(&x, &xt)?;
            MeanState::Gp(Box::new(g))
        }
        MeanModel::Blr => MeanState::Blr(BlrState {
            hs: HorseshoeState::new(x.ncols()),
            beta: DVector::zeros(x.ncols()),
        }),
        MeanModel::Bart => {
            let cuts = Cutpoints::from_matrix(&x);
            let bins = cuts.bin(&x)?;
            let bins_test = cuts.bin(&xt)?;
            let v_mu = config.bart.leaf_prior_var(target_range(&y));
            MeanState::Bart(Box::new(BartState {
                forest: Forest::new(config.bart.n_trees, n),
                cuts,
                bins,
                bins_test,
                v_mu,
            }))
        }
    };

    let mut names: Vec<String> = (0..n).map(|i| format!("f[{i}]")).collect();
    names.extend((0..n_test).map(|j| format!("ftest[{j}]")));
    match config.variance {
        VarianceModel::Hom => names.push("sigma2".into()),
        VarianceModel::Sv => {
            names.extend(["sv_mu", "sv_phi", "sv_sigma"].map(String::from));
            names.extend((0..n).map(|i| format!("logvol[{i}]")));
        }
    }
    match config.mean {
        MeanModel::Gp => names.extend(["xi", "lambda"].map(String::from)),
        MeanModel::Blr => {
            names.push("tau2".into());
            names.extend((0..x.ncols()).map(|j| format!("beta[{j}]")));
        }
        MeanModel::Bart => names.push("mean_leaves".into()),
    }
    if is_xalm {
        names.extend(["theta1", "theta2"].map(String::from));
    }
    let mut rec = Recorder::new(names);

    let mut f = DVector::<f64>::zeros(n);
    let mut failures = 0usize;
    let mut max_jitter = 0.0f64;
    let max_failures = (MAX_FAILURE_SHARE * config.mcmc.iters as f64).floor() as usize;
    let mut row = Vec::with_capacity(rec.names.len());

    for it in 0..config.mcmc.iters {
        if it == config.mcmc.burn {
            if let MeanState::Gp(g) = &mut mean {
                g.steps.xi.freeze();
                g.steps.lambda.freeze();
            }
            if let Some(xs) = &mut xalm {
                xs.step.freeze();
            }
        }
        let keep = config.mcmc.keeps(it);
        let mut ftest: Option<DVector<f64>> = None;
        let step: Result<()> = (|| {
            match &mut mean {
                MeanState::Gp(g) => {
                    let resid: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
                    var.update(&resid, rng)?;
                    let sigma = var.diag(n);
                    let mut current_ll = None;
                    let mut cur_factor = None;
                    if let Some(xs) = &mut xalm {
                        let (fa, ll) = g
                            .log_marginal(&g.sq_dist, &y, &sigma)
                            .ok_or_else(|| Error::numerical("GP marginal at current state"))?;
                        cur_factor = Some(fa);
                        let mv = mh_update_xalm(
                            xs.theta,
                            ll,
                            &mut xs.step,
                            |prop| {
                                let (px, pxt) = designs.build(Some(prop)).ok()?;
                                let pd = sq_dist_matrix(&px, &px).ok()?;
                                let (pfa, pll) = g.log_marginal(&pd, &y, &sigma)?;
                                Some((pll, (px, pxt, pfa)))
                            },
                            rng,
                        );
                        xs.theta = mv.theta;
                        if let Some((px, pxt, pfa)) = mv.accepted {
                            x = px;
                            xt = pxt;
                            g.set_inputs(&x, &xt)?;
                            cur_factor = Some(pfa);
                        }
                        current_ll = Some(mv.log_lik);
                    }
                    let h0 = g.hyper;
                    let data = KernelData { sq_dist: &g.sq_dist, y: &y, sigma: &sigma };
                    let (h, _, factor) =
                        mh_update_kernel_hyper_factored(g.hyper, current_ll, &data, &g.priors, &mut g.steps, rng);
                    g.hyper = h;
                    let factor = match factor.or(if g.hyper == h0 { cur_factor } else { None }) {
                        Some(fa) => fa,
                        None => {
                            g.log_marginal(&g.sq_dist, &y, &sigma)
                                .ok_or_else(|| Error::numerical("GP factorization at accepted state"))?
                                .0
                        }
                    };
                    let (fnew, jit) = g.draw_f(&factor, &y, &sigma, rng)?;
                    max_jitter = max_jitter.max(jit);
                    f = fnew;
                    if keep && n_test > 0 {
                        ftest = Some(g.draw_test(&factor, &y, rng)?);
                    }
                }
                MeanState::Blr(b) => {
                    let sigma = var.diag(n);
                    b.beta = sample_beta(&x, &y, &sigma, &b.hs.prior_variances(), rng)?;
                    f = &x * &b.beta;
                    let resid: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
                    var.update(&resid, rng)?;
                    update_horseshoe(&mut b.hs, b.beta.as_slice(), rng);
                    if let Some(xs) = &mut xalm {
                        let sigma = var.diag(n);
                        let ll = conditional_ll(&y, f.as_slice(), &sigma);
                        let beta = &b.beta;
                        let mv = mh_update_xalm(
                            xs.theta,
                            ll,
                            &mut xs.step,
                            |prop| {
                                let (px, pxt) = designs.build(Some(prop)).ok()?;
                                let pf = &px * beta;
                                Some((conditional_ll(&y, pf.as_slice(), &sigma), (px, pxt, pf)))
                            },
                            rng,
                        );
                        xs.theta = mv.theta;
                        if let Some((px, pxt, pf)) = mv.accepted {
                            x = px;
                            xt = pxt;
                            f = pf;
                        }
                    }
                    if keep && n_test > 0 {
                        ftest = Some(&xt * &b.beta);
                    }
                }
                MeanState::Bart(b) => {
                    let sigma = var.diag(n);
                    let weights: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
                    {
                        let ctx = TreeContext::new(&b.bins, &b.cuts, &config.bart, b.v_mu, &weights);
                        bart_sweep(&mut b.forest, &ctx, y.as_slice(), rng);
                    }
                    f = DVector::from_column_slice(&b.forest.fit);
                    let resid: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
                    var.update(&resid, rng)?;
                    if let Some(xs) = &mut xalm {
                        let sigma = var.diag(n);
                        let ll = conditional_ll(&y, f.as_slice(), &sigma);
                        let (cuts, forest) = (&b.cuts, &b.forest);
                        let mv = mh_update_xalm(
                            xs.theta,
                            ll,
                            &mut xs.step,
                            |prop| {
                                let (px, pxt) = designs.build(Some(prop)).ok()?;
                                let pbins = cuts.bin(&px).ok()?;
                                let pf = forest.predict(&pbins);
                                Some((conditional_ll(&y, &pf, &sigma), (px, pxt, pbins)))
                            },
                            rng,
                        );
                        xs.theta = mv.theta;
                        if let Some((px, pxt, pbins)) = mv.accepted {
                            b.bins_test = b.cuts.bin(&pxt)?;
                            b.bins = pbins;
                            x = px;
                            xt = pxt;
                            b.forest.refit(&b.bins);
                            f = DVector::from_column_slice(&b.forest.fit);
                        }
                    }
                    if keep && n_test > 0 {
                        ftest = Some(DVector::from_vec(b.forest.predict(&b.bins_test)));
                    }
                }
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical("non-finite conditional mean"));
            }
            Ok(())
        })();
        if let Err(e) = step {
            match e {
                Error::Numerical(msg) => {
                    failures += 1;
                    log::debug!("iteration {it}: {msg}");
                    if failures > max_failures {
                        return Err(Error::numerical(format!(
                            "{} of {} iterations failed numerically (last: {msg})",
                            failures, it + 1
                        )));
                    }
                    if keep {
                        return Err(Error::numerical(format!("retained iteration {it} failed: {msg}")));
                    }
                    continue;
                }
                other => return Err(other),
            }
        }
        if keep {
            row.clear();
            row.extend(f.iter());
            match &ftest {
                Some(v) => row.extend(v.iter()),
                None => row.extend(std::iter::repeat_n(f64::NAN, n_test)),
            }
            match &var {
                VarState::Hom(s2) => row.push(*s2),
                VarState::Sv(s) => {
                    row.extend([s.mu, s.phi, s.sigma]);
                    row.extend(s.h.iter());
                }
            }
            match &mean {
                MeanState::Gp(g) => row.extend([g.hyper.xi, g.hyper.lambda]),
                MeanState::Blr(b) => {
                    row.push(b.hs.tau2);
                    row.extend(b.beta.iter());
                }
                MeanState::Bart(b) => {
                    let leaves: usize = b.forest.trees.iter().map(|t| t.n_leaves()).sum();
                    row.push(leaves as f64 / b.forest.trees.len() as f64);
                }
            }
            if let Some(xs) = &xalm {
                row.extend([xs.theta.0, xs.theta.1]);
            }
            rec.push(&row);
        }
    }

    let mut diagnostics = ChainDiagnostics {
        iterations: config.mcmc.iters,
        numerical_failures: failures,
        max_jitter,
        ..Default::default()
    };
    match &mean {
        MeanState::Gp(g) => {
            diagnostics.acceptance.insert("xi".into(), g.steps.xi.acceptance_rate());
            diagnostics.acceptance.insert("lambda".into(), g.steps.lambda.acceptance_rate());
        }
        MeanState::Bart(b) => {
            let (a, p) = (b.forest.accepted.iter().sum::<u64>(), b.forest.proposed.iter().sum::<u64>());
            diagnostics.acceptance.insert("trees".into(), a as f64 / p.max(1) as f64);
        }
        MeanState::Blr(_) => {}
    }
    if let Some(xs) = &xalm {
        diagnostics.acceptance.insert("theta".into(), xs.step.acceptance_rate());
    }
    let w = designs.weights(theta0)?;
    let n_draws = rec.values.first().map_or(0, |c| c.len());
    Ok(PosteriorDraws {
        header: DrawsHeader {
            config: config.clone(),
            y_mean,
            y_sd,
            train_periods: train.periods.clone(),
            test_periods: test.map(|t| t.periods.clone()).unwrap_or_default(),
            test_realized: test
                .map(|t| t.y.iter().map(|v| v.is_finite().then_some(*v)).collect())
                .unwrap_or_default(),
            test_labels: Vec::new(),
            column_names: train.column_names(&w),
            n_draws,
            columns: rec.names,
            diagnostics,
        },
        values: rec.values,
    })
}
