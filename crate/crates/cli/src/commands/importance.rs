use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use gpmidas::data::{apply_columns, fit_columns};
use gpmidas::sampler::empirical_quantile;
use gpmidas::varimp::lasso_importance;
use gpmidas::{build_weight_matrix, Error, Horizon, MidasSample, Scheme};

use crate::io::{csv_writer, read_predictions, PanelArgs};
use crate::manifest::Manifest;
use crate::RunContext;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Predictions file written by `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Model label whose predictive medians are explained.
    #[arg(long)]
    pub model: String,
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let panel = args.panel.load()?;
    let groups: Vec<_> = read_predictions(&args.predictions)?
        .into_iter()
        .filter(|g| g.model == args.model)
        .collect();
    if groups.is_empty() {
        return Err(Error::Data(format!("no predictions for model '{}'", args.model)).into());
    }
    let mut cfg = ctx.config.clone();
    cfg.apply_label(&args.model)?;
    let sub = match cfg.info_set {
        Some(_) => panel.with_info_set(cfg.info_set)?,
        None => panel.clone(),
    };
    // The surrogate uses a fixed design; exponential Almon lags enter with
    // flat weights.
    let theta = (cfg.scheme == Scheme::ExpAlmon).then_some((0.0, 0.0));
    let w = build_weight_matrix(cfg.scheme, cfg.p_h, cfg.effective_degree(), cfg.m, theta)?;

    let mut horizons: Vec<String> = Vec::new();
    for g in &groups {
        if !horizons.contains(&g.h) {
            horizons.push(g.h.clone());
        }
    }
    let mut out = csv_writer(&ctx.out_dir.join("importance.csv"))?;
    out.write_record(["variable", "h", "model", "coefficient"])?;
    let mut cols = csv_writer(&ctx.out_dir.join("importance_columns.csv"))?;
    cols.write_record(["column", "h", "model", "coefficient"])?;
    let mut fits = BTreeMap::new();
    for h in &horizons {
        let horizon = Horizon::parse(h, cfg.m)?;
        let sample = MidasSample::from_panel(&sub, cfg.p_l, cfg.p_h, horizon)?;
        let mut rows = Vec::new();
        let mut medians = Vec::new();
        for g in groups.iter().filter(|g| &g.h == h) {
            let row = panel
                .find_period(&g.origin)
                .and_then(|t| sample.row_of_period(t))
                .ok_or_else(|| {
                    Error::Data(format!(
                        "origin '{}' has no design row at h = {h}",
                        g.origin
                    ))
                })?;
            rows.push(row);
            medians.push(empirical_quantile(&g.draws, 0.5));
        }
        let holdout = sample.select_rows(&rows);
        let raw = holdout.compress(&w);
        let (mean, sd) = fit_columns(&raw);
        let x = apply_columns(&raw, &mean, &sd);
        let imp = lasso_importance(
            &medians,
            &x,
            &holdout.column_names(&w),
            &holdout.column_variables(&w),
        )?;
        if imp.all_zero {
            log::warn!("h = {h}: the lasso path is all zero");
        }
        for (v, c) in &imp.by_variable {
            out.write_record([v.as_str(), h, &args.model, &c.to_string()])?;
        }
        for (name, c) in imp.column_names.iter().zip(&imp.coefficients) {
            cols.write_record([name.as_str(), h, &args.model, &c.to_string()])?;
        }
        fits.insert(
            h.clone(),
            serde_json::json!({ "rho": imp.rho, "all_zero": imp.all_zero, "periods": rows.len() }),
        );
    }
    out.flush()?;
    cols.flush()?;
    drop((out, cols));

    let mut m = Manifest::new("importance", &ctx.config, ctx.seed);
    args.panel.record(&mut m)?;
    m.input("predictions", &args.predictions)?;
    m.arg("model", &args.model);
    let mut meta = BTreeMap::new();
    meta.insert("lasso".to_string(), serde_json::to_value(fits)?);
    m.output(&ctx.out_dir, "importance.csv", meta)?;
    m.output(&ctx.out_dir, "importance_columns.csv", BTreeMap::new())?;
    m.write(&ctx.out_dir)
}
