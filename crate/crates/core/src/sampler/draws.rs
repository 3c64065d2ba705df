use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::midas_basis::exp_almon_weights;

pub const DRAWS_MAGIC: &[u8; 8] = b"GPMDRAWS";
pub const DRAWS_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub iterations: usize,
    pub numerical_failures: usize,
    /// MH acceptance rates by block name.
    pub acceptance: BTreeMap<String, f64>,
    pub max_jitter: f64,
}

/// Everything about a set of draws except the numbers themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsHeader {
    pub config: ModelConfig,
    pub y_mean: f64,
    pub y_sd: f64,
    pub train_periods: Vec<usize>,
    pub test_periods: Vec<usize>,
    /// Observed target at each test period, when known.
    #[serde(default)]
    pub test_realized: Vec<Option<f64>>,
    /// Calendar labels of the test periods; empty when not assigned.
    #[serde(default)]
    pub test_labels: Vec<String>,
    pub column_names: Vec<String>,
    pub n_draws: usize,
    pub columns: Vec<String>,
    pub diagnostics: ChainDiagnostics,
}

/// Retained MCMC draws stored column-wise; all values are in standardized
/// units except where a column name says otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub header: DrawsHeader,
    pub values: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.header.n_draws
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header.columns.iter().position(|c| c == name).map(|i| self.values[i].as_slice())
    }

    pub fn column_mean(&self, name: &str) -> Option<f64> {
        self.column(name).map(|c| c.iter().sum::<f64>() / c.len() as f64)
    }

    /// Columns `prefix[0]`, `prefix[1]`, ... in order.
    pub fn indexed(&self, prefix: &str) -> Vec<&[f64]> {
        (0..)
            .map_while(|i| self.column(&format!("{prefix}[{i}]")))
            .collect()
    }

    /// Posterior mean of an indexed family of columns.
    pub fn indexed_mean(&self, prefix: &str) -> Vec<f64> {
        self.indexed(prefix)
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// Posterior mean of the exponential Almon lag weights, when the draws
    /// carry `theta1` and `theta2`.
    pub fn posterior_lag_weights(&self) -> Option<Vec<f64>> {
        let (t1, t2) = (self.column("theta1")?, self.column("theta2")?);
        let p_h = self.header.config.p_h;
        let mut acc = vec![0.0; p_h];
        for (a, b) in t1.iter().zip(t2) {
            for (s, w) in acc.iter_mut().zip(exp_almon_weights(p_h, (*a, *b))) {
                *s += w;
            }
        }
        let n = t1.len().max(1) as f64;
        Some(acc.into_iter().map(|s| s / n).collect())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(DRAWS_MAGIC)?;
        w.write_all(&DRAWS_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for col in &self.values {
            let mut buf = Vec::with_capacity(col.len() * 8);
            for v in col {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DRAWS_MAGIC {
            return Err(Error::data("not a draws file (bad magic bytes)"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != DRAWS_VERSION {
            return Err(Error::data(format!("unsupported draws file version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        let mut hbuf = vec![0u8; len];
        r.read_exact(&mut hbuf)?;
        let header: DrawsHeader = serde_json::from_slice(&hbuf)?;
        let mut values = Vec::with_capacity(header.columns.len());
        let mut buf = vec![0u8; header.n_draws * 8];
        for _ in &header.columns {
            r.read_exact(&mut buf)?;
            values.push(
                buf.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        Ok(PosteriorDraws { header, values })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Inefficiency factor `1 + 2 sum_k w_k rho_k` with a Bartlett window of
/// width `floor(sqrt(n))`.
pub fn inefficiency_factor(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return f64::NAN;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let bw = (n as f64).sqrt().floor() as usize;
    let mut s = 0.0;
    for k in 1..=bw.min(n - 1) {
        let ck: f64 = (k..n).map(|t| (x[t] - mean) * (x[t - k] - mean)).sum::<f64>() / n as f64;
        s += (1.0 - k as f64 / (bw as f64 + 1.0)) * ck / c0;
    }
    1.0 + 2.0 * s
}
