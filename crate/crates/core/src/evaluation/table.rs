use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOSS_TABLE_HEADER: [&str; 6] = ["model", "origin", "h", "subsample", "metric", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub model: String,
    pub origin: String,
    pub h: String,
    pub subsample: String,
    pub metric: String,
    pub value: f64,
}

/// Long-format loss table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub records: Vec<LossRecord>,
}

impl LossTable {
    pub fn push(&mut self, r: LossRecord) {
        self.records.push(r);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(LOSS_TABLE_HEADER)?;
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != LOSS_TABLE_HEADER {
            return Err(Error::data(format!("unexpected loss table header {header:?}")));
        }
        let records = rdr.deserialize().collect::<std::result::Result<Vec<LossRecord>, _>>()?;
        if records.iter().any(|r| !(r.value >= 0.0) || !r.value.is_finite()) {
            return Err(Error::data("loss table contains negative or non-finite losses"));
        }
        Ok(LossTable { records })
    }

    /// Mean of `metric` per model over records tagged `subsample`.
    pub fn mean_by_model(&self, metric: &str, subsample: &str) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.metric == metric && r.subsample == subsample) {
            let e = acc.entry(r.model.clone()).or_default();
            e.0 += r.value;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = LossTable::default();
        for (m, v) in [("GP-xalm-hom", 0.5), ("BLR-br-hom", 0.75)] {
            t.push(LossRecord {
                model: m.into(),
                origin: "2001Q1".into(),
                h: "1/3".into(),
                subsample: "Full".into(),
                metric: "CRPS".into(),
                value: v,
            });
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,origin,h,subsample,metric,value\n"));
        assert_eq!(LossTable::read_csv(&buf[..]).unwrap(), t);
        assert_eq!(t.mean_by_model("CRPS", "Full")["BLR-br-hom"], 0.75);
    }
}
