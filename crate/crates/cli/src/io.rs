use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use gpmidas::{ingest_csv, Error, MixedFrequencyPanel, Schema};

use crate::manifest::Manifest;

/// Quarterly target and monthly predictor files with their schemas.
#[derive(clap::Args, Debug, Clone)]
pub struct PanelArgs {
    /// Quarterly CSV holding the target.
    #[arg(long, value_name = "CSV")]
    pub lf: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub lf_schema: PathBuf,
    /// Monthly CSV of predictors.
    #[arg(long, value_name = "CSV")]
    pub hf: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub hf_schema: PathBuf,
    /// Target column in the quarterly file.
    #[arg(long)]
    pub target: String,
}

impl PanelArgs {
    pub fn load(&self) -> Result<MixedFrequencyPanel> {
        let lf_schema = Schema::from_file(&self.lf_schema)
            .with_context(|| format!("reading schema {}", self.lf_schema.display()))?;
        let hf_schema = Schema::from_file(&self.hf_schema)
            .with_context(|| format!("reading schema {}", self.hf_schema.display()))?;
        let lf = ingest_csv(&self.lf, &lf_schema)
            .with_context(|| format!("reading {}", self.lf.display()))?;
        let hf = ingest_csv(&self.hf, &hf_schema)
            .with_context(|| format!("reading {}", self.hf.display()))?;
        Ok(MixedFrequencyPanel::from_frames(&lf, &self.target, &hf)?)
    }

    pub fn record(&self, m: &mut Manifest) -> Result<()> {
        m.input("lf", &self.lf)?;
        m.input("lf_schema", &self.lf_schema)?;
        m.input("hf", &self.hf)?;
        m.input("hf_schema", &self.hf_schema)?;
        m.arg("target", &self.target);
        Ok(())
    }
}

/// Start date of a `YYYYQn` period label.
pub fn quarter_start(label: &str) -> Option<NaiveDate> {
    let (y, q) = label.split_once('Q')?;
    let y: i32 = y.parse().ok()?;
    let q: u32 = q.parse().ok()?;
    if !(1..=4).contains(&q) {
        return None;
    }
    NaiveDate::from_ymd_opt(y, 3 * (q - 1) + 1, 1)
}

pub const PREDICTIONS_HEADER: [&str; 6] = ["model", "origin", "h", "draw", "value", "realized"];

/// Predictive draws of one model for one target period and horizon.
#[derive(Debug, Clone)]
pub struct PredictionGroup {
    pub model: String,
    pub origin: String,
    pub h: String,
    pub realized: Option<f64>,
    pub draws: Vec<f64>,
}

fn parse_f64(path: &Path, line: u64, col: &str, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| {
        Error::Data(format!(
            "{}: line {line}: column '{col}' holds '{s}', not a number",
            path.display()
        ))
        .into()
    })
}

/// Read a long predictions file, grouping rows by (model, origin, h) in
/// first-appearance order. The `realized` column must exist; blank cells mean
/// the target is not yet observed.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionGroup>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!(
                "{}: predictions file lacks the '{name}' column",
                path.display()
            ))
            .into()
        })
    };
    let (ci_model, ci_origin, ci_h, ci_value, ci_real) = (
        col("model")?,
        col("origin")?,
        col("h")?,
        col("value")?,
        col("realized")?,
    );
    let mut groups: Vec<PredictionGroup> = Vec::new();
    let mut index: HashMap<(String, String, String), usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        let key = (
            rec[ci_model].to_string(),
            rec[ci_origin].to_string(),
            rec[ci_h].to_string(),
        );
        let value = parse_f64(path, line, "value", &rec[ci_value])?;
        let realized = match rec[ci_real].trim() {
            "" | "NA" | "NaN" => None,
            s => Some(parse_f64(path, line, "realized", s)?),
        };
        let g = match index.get(&key) {
            Some(&g) => g,
            None => {
                index.insert(key.clone(), groups.len());
                groups.push(PredictionGroup {
                    model: key.0,
                    origin: key.1,
                    h: key.2,
                    realized,
                    draws: Vec::new(),
                });
                groups.len() - 1
            }
        };
        let group = &mut groups[g];
        if group.realized != realized {
            return Err(Error::Data(format!(
                "{}: line {line}: realized value differs within {} {} h={}",
                path.display(),
                group.model,
                group.origin,
                group.h
            ))
            .into());
        }
        group.draws.push(value);
    }
    if groups.is_empty() {
        return Err(Error::Data(format!("{}: no predictions", path.display())).into());
    }
    Ok(groups)
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
