use std::collections::BTreeMap;

use anyhow::{Context, Result};
use gpmidas::rng::{label_id, stream};
use gpmidas::{run_chain, Error, MidasSample, MixedFrequencyPanel, ModelConfig, PosteriorDraws};
use rayon::prelude::*;

use super::model_configs;
use crate::io::PanelArgs;
use crate::manifest::Manifest;
use crate::RunContext;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Target period to predict, e.g. `2019Q4`; repeatable.
    #[arg(long = "origin", required = true)]
    pub origins: Vec<String>,
    /// Comma-separated model labels (default: the configured model).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
}

pub fn draws_file_name(model: &str, origin: &str) -> String {
    format!("draws/{model}_{origin}.bin")
}

/// Fit `cfg` on every period observed by the time `origin` is predicted.
pub fn fit_one(
    panel: &MixedFrequencyPanel,
    cfg: &ModelConfig,
    origin: &str,
    seed: u64,
) -> Result<PosteriorDraws> {
    let t = panel
        .find_period(origin)
        .ok_or_else(|| Error::Data(format!("period '{origin}' is not covered by the data")))?;
    let sub = match cfg.info_set {
        Some(_) => panel.with_info_set(cfg.info_set)?,
        None => panel.clone(),
    };
    let sample = MidasSample::from_panel(&sub, cfg.p_l, cfg.p_h, cfg.horizon())?;
    let row = sample.row_of_period(t).ok_or_else(|| {
        Error::Data(format!(
            "period '{origin}' lacks complete lag information at h = {}",
            cfg.horizon()
        ))
    })?;
    let train = sample.select_rows(&sample.training_rows_for(t));
    if train.n() == 0 {
        return Err(Error::Data(format!("no training periods precede '{origin}'")).into());
    }
    let test = sample.select_rows(&[row]);
    let mut rng = stream(seed, &[label_id(&cfg.label()), label_id(origin)]);
    let mut draws = run_chain(cfg, &train, Some(&test), &mut rng)
        .with_context(|| format!("fitting {} at {origin}", cfg.label()))?;
    draws.header.test_labels = vec![origin.to_string()];
    Ok(draws)
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let panel = args.panel.load()?;
    let models = model_configs(&ctx.config, &args.models)?;
    let jobs: Vec<(usize, &String)> = (0..models.len())
        .flat_map(|i| args.origins.iter().map(move |o| (i, o)))
        .collect();
    let fits: Vec<Result<PosteriorDraws>> = jobs
        .par_iter()
        .map(|&(i, o)| fit_one(&panel, &models[i], o, ctx.seed))
        .collect();

    std::fs::create_dir_all(ctx.out_dir.join("draws"))?;
    let mut m = Manifest::new("fit", &ctx.config, ctx.seed);
    args.panel.record(&mut m)?;
    m.arg("origins", &args.origins).arg(
        "models",
        models.iter().map(|c| c.label()).collect::<Vec<_>>(),
    );
    for ((i, origin), fit) in jobs.iter().zip(fits) {
        let draws = fit?;
        let label = models[*i].label();
        let rel = draws_file_name(&label, origin);
        draws.save(ctx.out_dir.join(&rel))?;
        let d = &draws.header.diagnostics;
        let mut meta = BTreeMap::new();
        meta.insert("model".to_string(), label.into());
        meta.insert("origin".to_string(), origin.as_str().into());
        meta.insert(
            "config".to_string(),
            draws.header.config.to_config_string().into(),
        );
        meta.insert("retained_draws".to_string(), draws.n_draws().into());
        meta.insert(
            "training_periods".to_string(),
            draws.header.train_periods.len().into(),
        );
        meta.insert(
            "numerical_failures".to_string(),
            d.numerical_failures.into(),
        );
        m.output(&ctx.out_dir, &rel, meta)?;
    }
    m.write(&ctx.out_dir)
}
