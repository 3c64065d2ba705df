use std::path::Path;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Last period start belonging to the pre-pandemic subsample.
pub fn covid_split() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 10, 1).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subsample {
    Full,
    PreCovid,
    PostCovid,
    Recession,
    Expansion,
}

impl Subsample {
    pub const ALL: [Subsample; 5] =
        [Subsample::Full, Subsample::PreCovid, Subsample::PostCovid, Subsample::Recession, Subsample::Expansion];

    pub fn name(self) -> &'static str {
        match self {
            Subsample::Full => "Full",
            Subsample::PreCovid => "PreCovid",
            Subsample::PostCovid => "PostCovid",
            Subsample::Recession => "Recession",
            Subsample::Expansion => "Expansion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecessionCalendar {
    pub intervals: Vec<(NaiveDate, NaiveDate)>,
}

impl RecessionCalendar {
    /// CSV with header `start,end` and ISO dates.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut intervals = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::data(format!("recession calendar row {} needs start and end", i + 1)));
            }
            let parse = |s: &str| {
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|e| Error::data(format!("recession calendar row {}: bad date '{s}': {e}", i + 1)))
            };
            let (a, b) = (parse(&rec[0])?, parse(&rec[1])?);
            if b < a {
                return Err(Error::data(format!("recession calendar row {} ends before it starts", i + 1)));
            }
            intervals.push((a, b));
        }
        intervals.sort();
        Ok(RecessionCalendar { intervals })
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    fn coverage(&self) -> Option<(NaiveDate, NaiveDate)> {
        let lo = self.intervals.iter().map(|i| i.0).min()?;
        let hi = self.intervals.iter().map(|i| i.1).max()?;
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleMasks {
    pub full: Vec<bool>,
    pub pre_covid: Vec<bool>,
    pub post_covid: Vec<bool>,
    pub recession: Vec<bool>,
    pub expansion: Vec<bool>,
}

impl SubsampleMasks {
    pub fn get(&self, s: Subsample) -> &[bool] {
        match s {
            Subsample::Full => &self.full,
            Subsample::PreCovid => &self.pre_covid,
            Subsample::PostCovid => &self.post_covid,
            Subsample::Recession => &self.recession,
            Subsample::Expansion => &self.expansion,
        }
    }

    /// Subsamples containing observation `i`.
    pub fn tags(&self, i: usize) -> Vec<Subsample> {
        Subsample::ALL.into_iter().filter(|&s| self.get(s)[i]).collect()
    }
}

/// Masks for periods starting at `dates` and lasting `period_months`. A period
/// is recessionary when it overlaps a calendar interval.
pub fn subsample_masks(dates: &[NaiveDate], period_months: u32, calendar: &RecessionCalendar) -> SubsampleMasks {
    let split = covid_split();
    let coverage = calendar.coverage();
    let mut recession = Vec::with_capacity(dates.len());
    for &d in dates {
        let end = d
            .checked_add_months(Months::new(period_months.max(1)))
            .and_then(|e| e.pred_opt())
            .unwrap_or(d);
        match coverage {
            Some((lo, hi)) if end >= lo && d <= hi => {}
            _ => log::warn!("period starting {d} lies outside the recession calendar; treated as expansion"),
        }
        recession.push(calendar.intervals.iter().any(|&(a, b)| d <= b && end >= a));
    }
    SubsampleMasks {
        full: vec![true; dates.len()],
        pre_covid: dates.iter().map(|&d| d <= split).collect(),
        post_covid: dates.iter().map(|&d| d > split).collect(),
        expansion: recession.iter().map(|r| !r).collect(),
        recession,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, 1).unwrap()
    }

    #[test]
    fn covid_split_and_partitions() {
        let cal = RecessionCalendar::from_csv_str("start,end\n2007-12-01,2009-06-30\n2020-02-01,2020-04-30\n").unwrap();
        let dates = [ymd(2008, 1), ymd(2019, 10), ymd(2020, 1), ymd(2020, 4), ymd(2021, 1)];
        let m = subsample_masks(&dates, 3, &cal);
        assert_eq!(m.pre_covid, vec![true, true, false, false, false]);
        assert_eq!(m.recession, vec![true, false, true, true, false]);
        for i in 0..dates.len() {
            assert!(m.pre_covid[i] ^ m.post_covid[i]);
            assert!(m.recession[i] ^ m.expansion[i]);
        }
    }

    #[test]
    fn malformed_calendar_is_rejected() {
        assert!(RecessionCalendar::from_csv_str("start,end\n2020-05-01,2020-01-01\n").is_err());
        assert!(RecessionCalendar::from_csv_str("start,end\nfoo,2020-01-01\n").is_err());
    }
}
