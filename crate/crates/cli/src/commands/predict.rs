use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use gpmidas::rng::{label_id, stream};
use gpmidas::sampler::sorted_quantile;
use gpmidas::{draw_predictive, PosteriorDraws};

use crate::io::{csv_writer, fmt_opt, PREDICTIONS_HEADER};
use crate::manifest::Manifest;
use crate::RunContext;

pub const QUANTILE_LEVELS: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Draws file written by `fit`; repeatable.
    #[arg(long = "draws", required = true)]
    pub draws: Vec<PathBuf>,
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let pred_path = ctx.out_dir.join("predictions.csv");
    let quant_path = ctx.out_dir.join("quantiles.csv");
    let mut pw = csv_writer(&pred_path)?;
    pw.write_record(PREDICTIONS_HEADER)?;
    let mut qw = csv_writer(&quant_path)?;
    let mut qheader = vec![
        "model".to_string(),
        "origin".into(),
        "h".into(),
        "realized".into(),
        "mean".into(),
    ];
    qheader.extend(
        QUANTILE_LEVELS
            .iter()
            .map(|t| format!("q{:02}", (t * 100.0).round() as u32)),
    );
    qw.write_record(&qheader)?;

    let mut m = Manifest::new("predict", &ctx.config, ctx.seed);
    for path in &args.draws {
        let draws = PosteriorDraws::load(path)
            .with_context(|| format!("reading draws {}", path.display()))?;
        m.input("draws", path)?;
        let h = &draws.header;
        let model = h.config.label();
        let horizon = h.config.horizon().to_string();
        for j in 0..h.test_periods.len() {
            let origin = h
                .test_labels
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("t{}", h.test_periods[j]));
            let realized = h.test_realized.get(j).copied().flatten();
            let mut rng = stream(ctx.seed, &[label_id(&model), label_id(&origin), 2]);
            let pred = draw_predictive(&draws, j, None, &mut rng)?;
            let real = fmt_opt(realized);
            for (d, v) in pred.draws.iter().enumerate() {
                pw.write_record([
                    model.as_str(),
                    &origin,
                    &horizon,
                    &d.to_string(),
                    &v.to_string(),
                    &real,
                ])?;
            }
            let mut sorted = pred.draws.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let mut row = vec![
                model.clone(),
                origin.clone(),
                horizon.clone(),
                real.clone(),
                pred.mean().to_string(),
            ];
            row.extend(
                QUANTILE_LEVELS
                    .iter()
                    .map(|&t| sorted_quantile(&sorted, t).to_string()),
            );
            qw.write_record(&row)?;
        }
    }
    pw.flush()?;
    qw.flush()?;
    drop((pw, qw));
    m.output(&ctx.out_dir, "predictions.csv", BTreeMap::new())?;
    m.output(&ctx.out_dir, "quantiles.csv", BTreeMap::new())?;
    m.write(&ctx.out_dir)
}
