use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forecast horizon measured in high-frequency periods before the end of the
/// target low-frequency period (`h = steps / m`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Horizon {
    pub steps: usize,
    pub m: usize,
}

impl Horizon {
    pub fn new(steps: usize, m: usize) -> Self {
        Horizon { steps, m }
    }

    pub fn nowcast(m: usize) -> Self {
        Horizon { steps: 0, m }
    }

    pub fn as_f64(self) -> f64 {
        self.steps as f64 / self.m as f64
    }

    /// Whole low-frequency periods between origin and target.
    pub fn lf_periods(self) -> usize {
        self.steps / self.m
    }

    /// Parse `0`, `1`, `1/3`, `4/3`, ... for a given ratio `m`.
    pub fn parse(s: &str, m: usize) -> Result<Self> {
        let s = s.trim();
        let (num, den) = match s.split_once('/') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (s, "1"),
        };
        let num: usize = num
            .parse()
            .map_err(|_| Error::config(format!("cannot parse horizon '{s}'")))?;
        let den: usize = den
            .parse()
            .map_err(|_| Error::config(format!("cannot parse horizon '{s}'")))?;
        if den == 0 || (num * m) % den != 0 {
            return Err(Error::config(format!(
                "horizon '{s}' is not a multiple of 1/{m}"
            )));
        }
        Ok(Horizon { steps: num * m / den, m })
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = gcd(self.steps, self.m);
        let (n, d) = (self.steps / g.max(1), self.m / g.max(1));
        if self.steps == 0 {
            write!(f, "0")
        } else if d == 1 {
            write!(f, "{n}")
        } else {
            write!(f, "{n}/{d}")
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Nested information sets; a predictor tagged `Small` belongs to all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InfoSet {
    #[serde(rename = "s")]
    Small,
    #[serde(rename = "m")]
    Medium,
    #[serde(rename = "b")]
    Big,
}

impl InfoSet {
    pub fn code(self) -> &'static str {
        match self {
            InfoSet::Small => "s",
            InfoSet::Medium => "m",
            InfoSet::Big => "b",
        }
    }
}

impl FromStr for InfoSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" => Ok(InfoSet::Small),
            "m" => Ok(InfoSet::Medium),
            "b" => Ok(InfoSet::Big),
            _ => Err(Error::config(format!("unknown information set '{s}'"))),
        }
    }
}

/// Low-frequency target plus a high-frequency predictor panel.
///
/// High-frequency row `s` falls in low-frequency period `s / m`; the last
/// sub-period of period `t` is row `m t + m - 1`. Missing values are `NaN`.
#[derive(Debug, Clone)]
pub struct MixedFrequencyPanel {
    pub target_name: String,
    pub y: Vec<f64>,
    pub z: DMatrix<f64>,
    pub m: usize,
    pub names: Vec<String>,
    /// Publication delay of each predictor, in high-frequency periods.
    pub release_lag: Vec<usize>,
    /// Smallest information set containing each predictor.
    pub info_set: Vec<InfoSet>,
    /// Start date of each low-frequency period, when known.
    pub lf_dates: Option<Vec<NaiveDate>>,
}

impl MixedFrequencyPanel {
    pub fn new(y: Vec<f64>, z: DMatrix<f64>, m: usize, names: Vec<String>) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("frequency ratio m must be positive"));
        }
        if z.nrows() != m * y.len() {
            return Err(Error::data(format!(
                "high-frequency rows {} != m * T_L = {}",
                z.nrows(),
                m * y.len()
            )));
        }
        if names.len() != z.ncols() {
            return Err(Error::data("one name per predictor column required"));
        }
        let k = names.len();
        Ok(MixedFrequencyPanel {
            target_name: "y".into(),
            y,
            z,
            m,
            names,
            release_lag: vec![1; k],
            info_set: vec![InfoSet::Small; k],
            lf_dates: None,
        })
    }

    pub fn t_l(&self) -> usize {
        self.y.len()
    }

    pub fn t_h(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn predictor(&self, k: usize) -> Vec<f64> {
        self.z.column(k).iter().cloned().collect()
    }

    /// Panel restricted to the predictors at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.k()) {
            return Err(Error::invalid(format!("predictor index {bad} out of range")));
        }
        let z = DMatrix::from_fn(self.t_h(), idx.len(), |r, c| self.z[(r, idx[c])]);
        Ok(MixedFrequencyPanel {
            target_name: self.target_name.clone(),
            y: self.y.clone(),
            z,
            m: self.m,
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            release_lag: idx.iter().map(|&i| self.release_lag[i]).collect(),
            info_set: idx.iter().map(|&i| self.info_set[i]).collect(),
            lf_dates: self.lf_dates.clone(),
        })
    }

    /// Predictors belonging to `set` (or none, for the autoregressive
    /// benchmark).
    pub fn with_info_set(&self, set: Option<InfoSet>) -> Result<Self> {
        let idx: Vec<usize> = match set {
            None => Vec::new(),
            Some(set) => (0..self.k()).filter(|&i| self.info_set[i] <= set).collect(),
        };
        self.select(&idx)
    }

    /// Label for low-frequency period `t`: `YYYYQn` for quarterly dates,
    /// ISO date for other calendars, `t<idx>` without dates.
    pub fn period_label(&self, t: usize) -> String {
        match &self.lf_dates {
            Some(d) if t < d.len() => {
                if self.m == 3 {
                    format!("{}Q{}", d[t].year(), (d[t].month0() / 3) + 1)
                } else {
                    d[t].to_string()
                }
            }
            _ => format!("t{t}"),
        }
    }

    pub fn find_period(&self, label: &str) -> Option<usize> {
        (0..self.t_l()).find(|&t| self.period_label(t) == label)
    }
}
