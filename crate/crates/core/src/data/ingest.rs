//! Flat-file ingestion: one CSV per frequency plus a `key = value` schema.
//!
//! Schema keys:
//!
//! ```text
//! frequency = m            # m (monthly) or q (quarterly)
//! date_column = sasdate    # optional, default "date"
//! INDPRO = 5               # transformation code; listed columns are loaded
//! INDPRO.release_lag = 1   # optional publication delay (HF periods)
//! INDPRO.set = s           # optional smallest information set (s, m, b)
//! ```
//!
//! Columns keep their CSV order. Blank, `NA` and `NaN` cells are missing.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use super::design::DEFAULT_RELEASE_LAG;
use super::panel::{InfoSet, MixedFrequencyPanel};
use super::transform::{transform_series, TransformCode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frequency {
    Monthly,
    Quarterly,
}

impl Frequency {
    fn months(self) -> u32 {
        match self {
            Frequency::Monthly => 1,
            Frequency::Quarterly => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub name: String,
    pub code: TransformCode,
    pub release_lag: usize,
    pub info_set: InfoSet,
}

#[derive(Debug, Clone)]
pub struct Schema {
    pub frequency: Frequency,
    pub date_column: String,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut frequency = None;
        let mut date_column = "date".to_string();
        let mut codes: Vec<(String, TransformCode)> = Vec::new();
        let mut lags: HashMap<String, usize> = HashMap::new();
        let mut sets: HashMap<String, InfoSet> = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("schema line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::config(format!("schema line {}: invalid {what} '{value}'", lineno + 1))
            };
            match key {
                "frequency" => {
                    frequency = Some(match value {
                        "m" | "monthly" => Frequency::Monthly,
                        "q" | "quarterly" => Frequency::Quarterly,
                        _ => return Err(bad("frequency")),
                    })
                }
                "date_column" => date_column = value.to_string(),
                _ => {
                    if let Some(name) = key.strip_suffix(".release_lag") {
                        lags.insert(name.to_string(), value.parse().map_err(|_| bad("release lag"))?);
                    } else if let Some(name) = key.strip_suffix(".set") {
                        sets.insert(name.to_string(), value.parse().map_err(|_| bad("set"))?);
                    } else if key.contains('.') {
                        return Err(Error::config(format!(
                            "schema line {}: unknown key '{key}'",
                            lineno + 1
                        )));
                    } else {
                        let code: u8 = value.parse().map_err(|_| bad("transformation code"))?;
                        codes.push((key.to_string(), TransformCode::new(code)?));
                    }
                }
            }
        }
        let frequency = frequency.ok_or_else(|| Error::config("schema lacks 'frequency'"))?;
        let listed: HashSet<&String> = codes.iter().map(|(n, _)| n).collect();
        if let Some(orphan) = lags.keys().chain(sets.keys()).find(|k| !listed.contains(k)) {
            return Err(Error::config(format!("schema option for unlisted column '{orphan}'")));
        }
        let columns = codes
            .into_iter()
            .map(|(name, code)| ColumnSpec {
                release_lag: lags.get(&name).copied().unwrap_or(DEFAULT_RELEASE_LAG),
                info_set: sets.get(&name).copied().unwrap_or(InfoSet::Big),
                name,
                code,
            })
            .collect();
        Ok(Schema { frequency, date_column, columns })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Schema::parse(&fs::read_to_string(path)?)
    }
}

/// Transformed single-frequency series on a contiguous calendar.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    pub frequency: Frequency,
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<ColumnSpec>,
    /// One vector per column, aligned with `dates`.
    pub values: Vec<Vec<f64>>,
}

impl SeriesFrame {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").ok())
        .or_else(|| NaiveDate::parse_from_str(s, "%m/%d/%Y").ok())
}

fn month_index(d: NaiveDate) -> i64 {
    d.year() as i64 * 12 + d.month0() as i64
}

fn parse_cell(cell: &str) -> Option<f64> {
    let c = cell.trim();
    if c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        c.parse().ok()
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<SeriesFrame> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    ingest_reader(&mut reader, schema, &path.display().to_string())
}

pub fn ingest_str(text: &str, schema: &Schema) -> Result<SeriesFrame> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    ingest_reader(&mut reader, schema, "<memory>")
}

fn ingest_reader<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    schema: &Schema,
    source: &str,
) -> Result<SeriesFrame> {
    let headers = reader.headers()?.clone();
    let width = headers.len();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::data(format!("{source}: no column '{name}'")))
    };
    let date_idx = find(&schema.date_column)?;
    // CSV order, restricted to the schema's columns.
    let mut cols: Vec<(usize, ColumnSpec)> = schema
        .columns
        .iter()
        .map(|c| find(&c.name).map(|i| (i, c.clone())))
        .collect::<Result<_>>()?;
    cols.sort_by_key(|(i, _)| *i);

    let mut dates = Vec::new();
    let mut raw: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        if rec.len() != width {
            return Err(Error::data(format!(
                "{source}: line {line} has {} fields, header has {width}",
                rec.len()
            )));
        }
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let date = parse_date(&rec[date_idx]).ok_or_else(|| {
            Error::data(format!("{source}: line {line}: unparseable date '{}'", &rec[date_idx]))
        })?;
        if let Some(prev) = dates.last() {
            let step = month_index(date) - month_index(*prev);
            if step <= 0 {
                return Err(Error::data(format!("{source}: line {line}: dates not increasing")));
            }
            if step != schema.frequency.months() as i64 {
                return Err(Error::data(format!("{source}: line {line}: gap in the calendar")));
            }
        }
        dates.push(date);
        for (j, (i, spec)) in cols.iter().enumerate() {
            let v = parse_cell(&rec[*i]).ok_or_else(|| {
                Error::data(format!(
                    "{source}: line {line}: unparseable value '{}' in column {}",
                    &rec[*i], spec.name
                ))
            })?;
            raw[j].push(v);
        }
    }

    let mut values = Vec::with_capacity(cols.len());
    for (j, (_, spec)) in cols.iter().enumerate() {
        let out = transform_series(&raw[j], spec.code).map_err(|e| {
            let row_hint = match &e {
                Error::Data(msg) => msg.clone(),
                other => other.to_string(),
            };
            Error::data(format!("{source}: series {}: {row_hint}", spec.name))
        })?;
        values.push(out);
    }

    // Trim leading rows until every series is present.
    let start = (0..dates.len())
        .find(|&r| values.iter().all(|v| v[r].is_finite()))
        .ok_or_else(|| Error::data(format!("{source}: no row has all series present")))?;
    for (j, v) in values.iter().enumerate() {
        let last = v.iter().rposition(|x| x.is_finite()).unwrap_or(start);
        if let Some(r) = (start..=last).find(|&r| !v[r].is_finite()) {
            return Err(Error::data(format!(
                "{source}: series {} has an interior missing value at {}",
                cols[j].1.name, dates[r]
            )));
        }
    }
    Ok(SeriesFrame {
        frequency: schema.frequency,
        dates: dates[start..].to_vec(),
        columns: cols.into_iter().map(|(_, c)| c).collect(),
        values: values.into_iter().map(|v| v[start..].to_vec()).collect(),
    })
}

fn quarter_index(d: NaiveDate) -> i64 {
    d.year() as i64 * 4 + (d.month0() / 3) as i64
}

impl MixedFrequencyPanel {
    /// Align a quarterly target with monthly predictors (`m = 3`), padding
    /// with missing values so that `T_H = 3 T_L`.
    pub fn from_frames(lf: &SeriesFrame, target: &str, hf: &SeriesFrame) -> Result<Self> {
        if lf.frequency != Frequency::Quarterly || hf.frequency != Frequency::Monthly {
            return Err(Error::data("expected a quarterly target and monthly predictors"));
        }
        let ti = lf
            .column(target)
            .ok_or_else(|| Error::data(format!("target '{target}' not in the quarterly file")))?;
        let q_first = quarter_index(lf.dates[0]).max(quarter_index(hf.dates[0]));
        let q_last = quarter_index(*lf.dates.last().unwrap())
            .max(quarter_index(*hf.dates.last().unwrap()));
        if q_last < q_first {
            return Err(Error::data("quarterly and monthly files do not overlap"));
        }
        let t_l = (q_last - q_first + 1) as usize;
        let mut y = vec![f64::NAN; t_l];
        for (r, d) in lf.dates.iter().enumerate() {
            let q = quarter_index(*d) - q_first;
            if (0..t_l as i64).contains(&q) {
                y[q as usize] = lf.values[ti][r];
            }
        }
        let first_month = q_first * 3;
        let k = hf.columns.len();
        let mut z = DMatrix::from_element(3 * t_l, k, f64::NAN);
        for (r, d) in hf.dates.iter().enumerate() {
            let s = month_index(*d) - first_month;
            if (0..(3 * t_l) as i64).contains(&s) {
                for c in 0..k {
                    z[(s as usize, c)] = hf.values[c][r];
                }
            }
        }
        let lf_dates = (0..t_l)
            .map(|t| {
                let q = q_first + t as i64;
                NaiveDate::from_ymd_opt((q / 4) as i32, (q % 4) as u32 * 3 + 1, 1).unwrap()
            })
            .collect();
        let mut panel =
            MixedFrequencyPanel::new(y, z, 3, hf.columns.iter().map(|c| c.name.clone()).collect())?;
        panel.target_name = target.to_string();
        panel.release_lag = hf.columns.iter().map(|c| c.release_lag).collect();
        panel.info_set = hf.columns.iter().map(|c| c.info_set).collect();
        panel.lf_dates = Some(lf_dates);
        Ok(panel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarterly_gdp_to_annualised_growth() {
        let schema = Schema::parse("frequency = q\nGDP = 8\n").unwrap();
        let csv = "date,GDP\n2000-01-01,100\n2000-04-01,101\n2000-07-01,101\n";
        let f = ingest_str(csv, &schema).unwrap();
        assert_eq!(f.dates.len(), 2);
        let g = 100.0 * (1.01f64.powi(4) - 1.0);
        assert!((f.values[0][0] - g).abs() < 1e-12);
        assert_eq!(f.values[0][1], 0.0);
    }

    #[test]
    fn monthly_first_differences() {
        let schema = Schema::parse("frequency = m\ndate_column = sasdate\nRATE = 2\n").unwrap();
        let csv = "sasdate,RATE\n2000-01-01,5.0\n2000-02-01,5.5\n2000-03-01,5.25\n";
        let f = ingest_str(csv, &schema).unwrap();
        assert_eq!(f.values[0], vec![0.5, -0.25]);
    }

    #[test]
    fn zero_under_log_names_series_and_row() {
        let schema = Schema::parse("frequency = m\nIP = 5\n").unwrap();
        let csv = "date,IP\n2000-01-01,1\n2000-02-01,0\n2000-03-01,2\n";
        let msg = ingest_str(csv, &schema).unwrap_err().to_string();
        assert!(msg.contains("IP") && msg.contains("row 1"), "{msg}");
    }

    #[test]
    fn malformed_files_are_rejected() {
        let schema = Schema::parse("frequency = m\nA = 1\n").unwrap();
        assert!(ingest_str("date,A\n2000-01-01,1\n2000-02-01\n", &schema).is_err());
        assert!(ingest_str("date,A\n2000-01-01,1\n2000-02-01,x\n", &schema).is_err());
        assert!(ingest_str("date,A\n2000-02-01,1\n2000-01-01,2\n", &schema).is_err());
        assert!(ingest_str("date,A\n2000-01-01,1\n2000-02-01,\n2000-03-01,3\n", &schema).is_err());
        // trailing gaps are the ragged edge, not an error
        let f = ingest_str("date,A\n2000-01-01,1\n2000-02-01,2\n2000-03-01,\n", &schema).unwrap();
        assert!(f.values[0][2].is_nan());
    }

    #[test]
    fn schema_errors() {
        assert!(Schema::parse("A = 1\n").is_err());
        assert!(Schema::parse("frequency = w\n").is_err());
        assert!(Schema::parse("frequency = m\nA = 11\n").is_err());
        assert!(Schema::parse("frequency = m\nB.release_lag = 2\n").is_err());
        let s = Schema::parse("frequency = m\nA = 1\nA.release_lag = 2\nA.set = m\n").unwrap();
        assert_eq!(s.columns[0].release_lag, 2);
        assert_eq!(s.columns[0].info_set, InfoSet::Medium);
    }

    #[test]
    fn frames_align_into_panel() {
        let q = Schema::parse("frequency = q\nGDP = 1\n").unwrap();
        let m = Schema::parse("frequency = m\nIP = 1\n").unwrap();
        let lf = ingest_str("date,GDP\n2000-01-01,1\n2000-04-01,2\n", &q).unwrap();
        let hf = ingest_str(
            "date,IP\n2000-02-01,1\n2000-03-01,2\n2000-04-01,3\n2000-05-01,4\n2000-06-01,5\n2000-07-01,6\n",
            &m,
        )
        .unwrap();
        let p = MixedFrequencyPanel::from_frames(&lf, "GDP", &hf).unwrap();
        assert_eq!(p.t_l(), 3);
        assert_eq!(p.t_h(), 9);
        assert!(p.z[(0, 0)].is_nan());
        assert_eq!(p.z[(1, 0)], 1.0);
        assert!(p.y[2].is_nan());
        assert_eq!(p.period_label(1), "2000Q2");
    }
}
