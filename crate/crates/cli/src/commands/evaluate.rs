use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use anyhow::Result;
use gpmidas::evaluation::{
    dm_test, dummy_regression, forecast_losses, model_confidence_set, subsample_masks, Factor,
    LossRecord, LossTable, McsConfig, RecessionCalendar, Subsample, DM_MIN_LENGTH, MCS_MIN_LENGTH,
};
use gpmidas::rng::{label_id, stream};
use gpmidas::{Error, Horizon, ModelConfig};
use serde::Serialize;

use crate::io::{csv_writer, quarter_start, read_predictions, PredictionGroup};
use crate::manifest::Manifest;
use crate::RunContext;

pub const DM_METRICS: [&str; 4] = ["CRPS", "CRPS-L", "CRPS-R", "MAE"];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Predictions file written by `predict`; repeatable.
    #[arg(long = "predictions", required = true)]
    pub predictions: Vec<PathBuf>,
    /// Reference model for DM tests (default: BLR-br-hom when present,
    /// otherwise the first model).
    #[arg(long)]
    pub benchmark: Option<String>,
    /// CSV of recession intervals (`start,end`).
    #[arg(long)]
    pub recessions: Option<PathBuf>,
    /// Harvey-Leybourne-Newbold small-sample correction.
    #[arg(long)]
    pub harvey: bool,
    #[arg(long, default_value_t = 0.10)]
    pub alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub block_length: usize,
    #[arg(long, default_value_t = 5000)]
    pub mcs_replications: usize,
}

#[derive(Debug, Serialize)]
struct McsReport {
    h: String,
    metric: String,
    subsample: String,
    periods: usize,
    models: Vec<String>,
    included: Vec<String>,
    eliminated: Vec<String>,
    p_values: Vec<f64>,
}

fn first_appearance<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    items
        .filter(|s| seen.insert(*s))
        .map(str::to_string)
        .collect()
}

/// Subsample tags per origin. Recession tags need a calendar and every
/// origin must be a `YYYYQn` label; otherwise only `Full` is produced.
fn origin_tags(
    origins: &[String],
    calendar: Option<&RecessionCalendar>,
) -> HashMap<String, Vec<Subsample>> {
    let dates: Option<Vec<_>> = origins.iter().map(|o| quarter_start(o)).collect();
    let Some(dates) = dates else {
        log::warn!("origins are not quarterly labels; only the full sample is scored");
        return origins
            .iter()
            .map(|o| (o.clone(), vec![Subsample::Full]))
            .collect();
    };
    let empty = RecessionCalendar {
        intervals: Vec::new(),
    };
    let masks = subsample_masks(&dates, 3, calendar.unwrap_or(&empty));
    origins
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let tags = masks
                .tags(i)
                .into_iter()
                .filter(|s| {
                    calendar.is_some() || !matches!(s, Subsample::Recession | Subsample::Expansion)
                })
                .collect();
            (o.clone(), tags)
        })
        .collect()
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let mut m = Manifest::new("evaluate", &ctx.config, ctx.seed);
    let mut groups: Vec<PredictionGroup> = Vec::new();
    let mut keys = HashSet::new();
    for p in &args.predictions {
        m.input("predictions", p)?;
        for g in read_predictions(p)? {
            if !keys.insert((g.model.clone(), g.origin.clone(), g.h.clone())) {
                return Err(Error::Data(format!(
                    "{} {} h={} appears in more than one file",
                    g.model, g.origin, g.h
                ))
                .into());
            }
            groups.push(g);
        }
    }
    let calendar = match &args.recessions {
        Some(p) => {
            m.input("recessions", p)?;
            Some(RecessionCalendar::from_csv(p)?)
        }
        None => None,
    };
    let scored: Vec<(&PredictionGroup, f64)> = groups
        .iter()
        .filter_map(|g| match g.realized {
            Some(y) => Some((g, y)),
            None => {
                log::warn!(
                    "{} {} h={} has no realized value; skipped",
                    g.model,
                    g.origin,
                    g.h
                );
                None
            }
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::Data(
            "no prediction has a realized value in the 'realized' column".into(),
        )
        .into());
    }

    let origins = first_appearance(scored.iter().map(|(g, _)| g.origin.as_str()));
    let tags = origin_tags(&origins, calendar.as_ref());
    let mut table = LossTable::default();
    for (g, y) in &scored {
        let losses = forecast_losses(&g.draws, *y)?;
        for s in &tags[&g.origin] {
            for (metric, value) in &losses {
                table.push(LossRecord {
                    model: g.model.clone(),
                    origin: g.origin.clone(),
                    h: g.h.clone(),
                    subsample: s.name().to_string(),
                    metric: metric.clone(),
                    value: *value,
                });
            }
        }
    }
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    std::fs::write(ctx.out_dir.join("losses.csv"), buf)?;

    let models = first_appearance(scored.iter().map(|(g, _)| g.model.as_str()));
    let horizons = first_appearance(scored.iter().map(|(g, _)| g.h.as_str()));
    let subsamples: Vec<&str> = Subsample::ALL
        .iter()
        .map(|s| s.name())
        .filter(|s| table.records.iter().any(|r| r.subsample == *s))
        .collect();
    let benchmark = match &args.benchmark {
        Some(b) if models.contains(b) => b.clone(),
        Some(b) => {
            return Err(Error::Config(format!("benchmark '{b}' has no scored predictions")).into())
        }
        None if models.iter().any(|x| x == "BLR-br-hom") => "BLR-br-hom".to_string(),
        None => models[0].clone(),
    };
    let lookup: HashMap<(&str, &str, &str, &str, &str), f64> = table
        .records
        .iter()
        .map(|r| {
            (
                (
                    r.model.as_str(),
                    r.origin.as_str(),
                    r.h.as_str(),
                    r.subsample.as_str(),
                    r.metric.as_str(),
                ),
                r.value,
            )
        })
        .collect();
    let series = |model: &str, origins: &[&String], h: &str, s: &str, metric: &str| -> Vec<f64> {
        origins
            .iter()
            .map(|o| lookup[&(model, o.as_str(), h, s, metric)])
            .collect()
    };
    let common = |ms: &[&String], h: &str, s: &str| -> Vec<&String> {
        origins
            .iter()
            .filter(|o| {
                ms.iter()
                    .all(|mm| lookup.contains_key(&(mm.as_str(), o.as_str(), h, s, "CRPS")))
            })
            .collect()
    };

    // Diebold-Mariano against the benchmark.
    let mut dw = csv_writer(&ctx.out_dir.join("dm.csv"))?;
    dw.write_record([
        "h",
        "subsample",
        "metric",
        "model",
        "benchmark",
        "n",
        "relative",
        "statistic",
        "p_value",
        "stars",
    ])?;
    for h in &horizons {
        let horizon = Horizon::parse(h, ctx.config.m)?;
        for s in &subsamples {
            for model in models.iter().filter(|x| **x != benchmark) {
                let os = common(&[model, &benchmark], h, s);
                if os.len() < DM_MIN_LENGTH {
                    log::warn!(
                        "h = {h}, {s}: {} common periods, too few for a DM test",
                        os.len()
                    );
                    continue;
                }
                for metric in DM_METRICS {
                    let a = series(model, &os, h, s, metric);
                    let b = series(&benchmark, &os, h, s, metric);
                    let dm = dm_test(&a, &b, horizon, args.harvey)?;
                    let rel = a.iter().sum::<f64>() / b.iter().sum::<f64>();
                    dw.write_record([
                        h.as_str(),
                        s,
                        metric,
                        model,
                        &benchmark,
                        &os.len().to_string(),
                        &rel.to_string(),
                        &dm.statistic.to_string(),
                        &dm.p_value.to_string(),
                        dm.stars(),
                    ])?;
                }
            }
        }
    }
    dw.flush()?;
    drop(dw);

    // Model confidence set on CRPS per horizon and subsample.
    let mcs_cfg = McsConfig {
        alpha: args.alpha,
        block_length: args.block_length,
        replications: args.mcs_replications,
    };
    let mut reports = Vec::new();
    for h in &horizons {
        for s in &subsamples {
            let ms: Vec<&String> = models.iter().collect();
            let os = common(&ms, h, s);
            if ms.len() < 2 || os.len() < MCS_MIN_LENGTH {
                log::warn!(
                    "h = {h}, {s}: {} common periods, too few for the MCS",
                    os.len()
                );
                continue;
            }
            let losses: Vec<Vec<f64>> = os
                .iter()
                .map(|o| {
                    ms.iter()
                        .map(|mm| lookup[&(mm.as_str(), o.as_str(), h.as_str(), *s, "CRPS")])
                        .collect()
                })
                .collect();
            let mut rng = stream(ctx.seed, &[label_id("mcs"), label_id(h), label_id(s)]);
            let r = model_confidence_set(&losses, &mcs_cfg, &mut rng)?;
            reports.push(McsReport {
                h: h.clone(),
                metric: "CRPS".into(),
                subsample: s.to_string(),
                periods: os.len(),
                models: ms.iter().map(|x| x.to_string()).collect(),
                included: r.included.iter().map(|&i| ms[i].clone()).collect(),
                eliminated: r.eliminated.iter().map(|&i| ms[i].clone()).collect(),
                p_values: r.p_values,
            });
        }
    }
    let mut text = serde_json::to_string_pretty(&reports)?;
    text.push('\n');
    std::fs::write(ctx.out_dir.join("mcs.json"), text)?;

    let regression_written = write_regression(ctx, &table)?;

    m.arg("benchmark", &benchmark)
        .arg("harvey", args.harvey)
        .arg("alpha", args.alpha)
        .arg("block_length", args.block_length)
        .arg("mcs_replications", args.mcs_replications);
    let mut outputs = vec!["losses.csv", "dm.csv", "mcs.json"];
    if regression_written {
        outputs.push("regression.csv");
    }
    for o in outputs {
        m.output(&ctx.out_dir, o, BTreeMap::new())?;
    }
    m.write(&ctx.out_dir)
}

/// Label components used as regression factors, with their preferred
/// baselines.
const FACTORS: [(&str, &str); 5] = [
    ("mean", "BLR"),
    ("scheme", "br"),
    ("variance", "hom"),
    ("size", "s"),
    ("h", "0"),
];

/// Log full-sample CRPS on model-feature and horizon dummies. Skipped with a
/// warning when labels do not parse or the design is degenerate.
fn write_regression(ctx: &RunContext, table: &LossTable) -> Result<bool> {
    let rows: Vec<&LossRecord> = table
        .records
        .iter()
        .filter(|r| r.subsample == "Full" && r.metric == "CRPS" && r.value > 0.0)
        .collect();
    let mut levels: Vec<Vec<String>> = vec![Vec::new(); FACTORS.len()];
    for r in &rows {
        let mut cfg = ModelConfig::default();
        if let Err(e) = cfg.apply_label(&r.model) {
            log::warn!("dummy regression skipped: {e}");
            return Ok(false);
        }
        let parts: Vec<&str> = r.model.split('-').collect();
        let values = [
            parts[0],
            parts[1],
            parts[2],
            parts.get(3).copied().unwrap_or("all"),
            r.h.as_str(),
        ];
        for (l, v) in levels.iter_mut().zip(values) {
            l.push(v.to_string());
        }
    }
    let factors: Vec<Factor> = FACTORS
        .iter()
        .zip(levels)
        .filter_map(|((name, preferred), levels)| {
            let mut distinct: Vec<&String> = levels.iter().collect();
            distinct.sort();
            distinct.dedup();
            if distinct.len() < 2 {
                return None;
            }
            let baseline = if distinct.iter().any(|d| d == preferred) {
                preferred.to_string()
            } else {
                distinct[0].clone()
            };
            Some(Factor {
                name: name.to_string(),
                levels,
                baseline,
            })
        })
        .collect();
    if factors.is_empty() {
        log::warn!("dummy regression skipped: every label component is constant");
        return Ok(false);
    }
    let y: Vec<f64> = rows.iter().map(|r| r.value.ln()).collect();
    let coefs = match dummy_regression(&y, &factors) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("dummy regression skipped: {e}");
            return Ok(false);
        }
    };
    let mut w = csv_writer(&ctx.out_dir.join("regression.csv"))?;
    w.write_record(["term", "estimate", "std_error", "p_value", "stars"])?;
    for c in coefs {
        w.write_record([
            c.name,
            c.estimate.to_string(),
            c.std_error.to_string(),
            c.p_value.to_string(),
            c.stars,
        ])?;
    }
    w.flush()?;
    Ok(true)
}
