use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use gpmidas::dgp::{run_replication_study, DgpSpec};
use gpmidas::Error;

use super::model_configs;
use crate::manifest::Manifest;
use crate::RunContext;

pub const DEFAULT_MODELS: [&str; 4] = ["GP-xalm-hom", "GP-br-hom", "BLR-br-hom", "BART-br-hom"];

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Design label such as `NL-fast-K10`; repeatable (default: all twelve).
    #[arg(long = "dgp")]
    pub dgps: Vec<String>,
    /// Replications per design.
    #[arg(long = "R", default_value_t = 100)]
    pub replications: usize,
    /// Comma-separated model labels.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long, default_value = "BLR-br-hom")]
    pub benchmark: String,
    /// Override the number of low-frequency training periods.
    #[arg(long = "t-l")]
    pub t_l: Option<usize>,
}

pub fn run(ctx: &RunContext, args: Args) -> Result<()> {
    let mut specs: Vec<DgpSpec> = if args.dgps.is_empty() {
        DgpSpec::all()
    } else {
        args.dgps
            .iter()
            .map(|d| d.parse())
            .collect::<gpmidas::Result<_>>()?
    };
    if let Some(t) = args.t_l {
        for s in &mut specs {
            s.t_l = t;
        }
    }
    for s in &specs {
        s.validate()?;
    }
    let labels: Vec<String> = if args.models.is_empty() {
        DEFAULT_MODELS.iter().map(|s| s.to_string()).collect()
    } else {
        args.models.clone()
    };
    let models = model_configs(&ctx.config, &labels)?;
    if !models.iter().any(|m| m.label() == args.benchmark) {
        return Err(Error::Config(format!(
            "benchmark '{}' is not among the models",
            args.benchmark
        ))
        .into());
    }
    let study = run_replication_study(
        &specs,
        &models,
        args.replications,
        ctx.seed,
        &args.benchmark,
    )?;

    let out = &ctx.out_dir;
    let write = |name: &str, text: &str| -> Result<()> {
        std::fs::write(out.join(name), text).with_context(|| format!("writing {name}"))
    };
    write("grid_crps.csv", &study.grid_csv("CRPS"))?;
    write("grid_mae.csv", &study.grid_csv("MAE"))?;
    let mut buf = Vec::new();
    study.loss_table().write_csv(&mut buf)?;
    std::fs::write(out.join("losses.csv"), buf)?;
    let mut cells = serde_json::to_string_pretty(&study)?;
    cells.push('\n');
    write("study.json", &cells)?;

    let mut m = Manifest::new("simulate", &ctx.config, ctx.seed);
    m.arg(
        "dgp",
        specs.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
    )
    .arg("R", args.replications)
    .arg("models", &labels)
    .arg("benchmark", &args.benchmark)
    .arg("t_l", args.t_l);
    let failed: usize = study.cells.iter().map(|c| c.n_failed).sum();
    for name in ["grid_crps.csv", "grid_mae.csv", "losses.csv", "study.json"] {
        let mut meta = BTreeMap::new();
        if name == "study.json" {
            meta.insert("failed_fits".to_string(), failed.into());
        }
        m.output(out, name, meta)?;
    }
    m.write(out)?;
    report(out, &study);
    Ok(())
}

fn report(out: &Path, study: &gpmidas::dgp::StudyResult) {
    for c in study.cells.iter().filter(|c| c.flagged) {
        log::warn!(
            "{} / {}: {} of {} fits failed",
            c.dgp,
            c.model,
            c.n_failed,
            c.n_failed + c.n_ok
        );
    }
    log::info!("wrote study results to {}", out.display());
}
