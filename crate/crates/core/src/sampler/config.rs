use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bart::BartConfig;
use crate::data::{Horizon, InfoSet};
use crate::error::{Error, Result};
use crate::midas_basis::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeanModel {
    #[serde(rename = "BLR")]
    Blr,
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "BART")]
    Bart,
}

impl fmt::Display for MeanModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeanModel::Blr => "BLR",
            MeanModel::Gp => "GP",
            MeanModel::Bart => "BART",
        })
    }
}

impl FromStr for MeanModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blr" => Ok(MeanModel::Blr),
            "gp" => Ok(MeanModel::Gp),
            "bart" => Ok(MeanModel::Bart),
            _ => Err(Error::config(format!("unknown mean model '{s}' (expected BLR, GP or BART)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceModel {
    #[serde(rename = "hom")]
    Hom,
    #[serde(rename = "sv")]
    Sv,
}

impl fmt::Display for VarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarianceModel::Hom => "hom",
            VarianceModel::Sv => "sv",
        })
    }
}

impl FromStr for VarianceModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hom" => Ok(VarianceModel::Hom),
            "sv" => Ok(VarianceModel::Sv),
            _ => Err(Error::config(format!("unknown variance model '{s}' (expected hom or sv)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcSettings {
    pub iters: usize,
    pub burn: usize,
    pub thin: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings { iters: 12_000, burn: 3_000, thin: 3 }
    }
}

impl McmcSettings {
    pub fn retained(&self) -> usize {
        (self.iters - self.burn) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.burn >= self.iters {
            return Err(Error::config("need thin >= 1 and burn < iters"));
        }
        Ok(())
    }

    /// Whether post-burn iteration `it` (0-based over all iterations) is kept.
    pub fn keeps(&self, it: usize) -> bool {
        it >= self.burn && (it - self.burn + 1) % self.thin == 0
    }
}

/// Full identity of one model fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mean: MeanModel,
    pub variance: VarianceModel,
    pub scheme: Scheme,
    /// Polynomial degree for `alm`, `leg`, `ber` and `fou`.
    pub degree: usize,
    /// `None` keeps every predictor in the panel.
    pub info_set: Option<InfoSet>,
    pub p_l: usize,
    pub p_h: usize,
    pub m: usize,
    /// Horizon in high-frequency steps.
    pub h_steps: usize,
    pub mcmc: McmcSettings,
    pub seed: u64,
    pub bart: BartConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mean: MeanModel::Blr,
            variance: VarianceModel::Hom,
            scheme: Scheme::Bridge,
            degree: 3,
            info_set: None,
            p_l: 4,
            p_h: 12,
            m: 3,
            h_steps: 0,
            mcmc: McmcSettings::default(),
            seed: 0,
            bart: BartConfig::default(),
        }
    }
}

/// Keys accepted in a model configuration file.
pub const CONFIG_KEYS: [&str; 14] = [
    "mean", "variance", "scheme", "degree", "size", "p_l", "p_h", "m", "h", "iters", "burn", "thin", "seed",
    "trees",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(format!("invalid value '{v}' for key '{key}'")))
}

impl ModelConfig {
    pub fn horizon(&self) -> Horizon {
        Horizon::new(self.h_steps, self.m)
    }

    /// Polynomial degree when it is meaningful for the scheme.
    pub fn effective_degree(&self) -> usize {
        if self.scheme.is_polynomial() {
            self.degree
        } else {
            0
        }
    }

    /// Short label such as `GP-xalm-hom` or `BLR-leg3-sv-s`; the
    /// information set is appended when one is selected.
    pub fn label(&self) -> String {
        let scheme = if self.scheme.is_polynomial() {
            format!("{}{}", self.scheme, self.degree)
        } else {
            self.scheme.to_string()
        };
        match self.info_set {
            Some(set) => format!("{}-{}-{}-{}", self.mean, scheme, self.variance, set.code()),
            None => format!("{}-{}-{}", self.mean, scheme, self.variance),
        }
    }

    /// Set mean, scheme, degree, variance and information set from a label
    /// produced by [`ModelConfig::label`].
    pub fn apply_label(&mut self, label: &str) -> Result<()> {
        let parts: Vec<&str> = label.split('-').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(Error::config(format!("cannot parse model label '{label}' (expected e.g. GP-xalm-hom)")));
        }
        let mean: MeanModel = parts[0].parse()?;
        let split = parts[1].find(|c: char| c.is_ascii_digit()).unwrap_or(parts[1].len());
        let (code, digits) = parts[1].split_at(split);
        let scheme: Scheme = code
            .parse()
            .map_err(|_| Error::config(format!("unknown MIDAS scheme '{code}' in label '{label}'")))?;
        let degree = if scheme.is_polynomial() {
            if digits.is_empty() { self.degree } else { parse_num("degree", digits)? }
        } else if digits.is_empty() {
            self.degree
        } else {
            return Err(Error::config(format!("scheme '{code}' takes no degree in label '{label}'")));
        };
        let variance: VarianceModel = parts[2].parse()?;
        let info_set = match parts.get(3) {
            Some(s) => Some(s.parse()?),
            None => None,
        };
        self.mean = mean;
        self.scheme = scheme;
        self.degree = degree;
        self.variance = variance;
        self.info_set = info_set;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        self.bart.validate()?;
        if self.m == 0 || self.p_h == 0 {
            return Err(Error::config("m and p_h must be positive"));
        }
        if self.scheme.is_polynomial() && self.degree == 0 {
            return Err(Error::config(format!("scheme {} needs degree >= 1", self.scheme)));
        }
        Ok(())
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mean" => self.mean = value.parse()?,
            "variance" => self.variance = value.parse()?,
            "scheme" => {
                self.scheme = value
                    .parse()
                    .map_err(|_| Error::config(format!("unknown MIDAS scheme '{value}'")))?
            }
            "degree" => self.degree = parse_num(key, value)?,
            "size" => {
                self.info_set = match value {
                    "all" => None,
                    v => Some(v.parse().map_err(|_| Error::config(format!("unknown information set '{v}'")))?),
                }
            }
            "p_l" => self.p_l = parse_num(key, value)?,
            "p_h" => self.p_h = parse_num(key, value)?,
            "m" => self.m = parse_num(key, value)?,
            "h" => {
                self.h_steps = Horizon::parse(value, self.m)
                    .map_err(|e| Error::config(format!("invalid horizon '{value}': {e}")))?
                    .steps
            }
            "iters" => self.mcmc.iters = parse_num(key, value)?,
            "burn" => self.mcmc.burn = parse_num(key, value)?,
            "thin" => self.mcmc.thin = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "trees" => self.bart.n_trees = parse_num(key, value)?,
            _ => return Err(Error::config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Parse a flat `key = value` file over the defaults. `#` starts a
    /// comment; unknown and repeated keys are errors. `m` is applied before
    /// `h` so fractional horizons resolve against the right ratio.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !CONFIG_KEYS.contains(&k) {
                return Err(Error::config(format!("line {}: unknown configuration key '{k}'", lineno + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
        }
        let mut cfg = ModelConfig::default();
        if let Some(v) = entries.remove("m") {
            cfg.set("m", &v)?;
        }
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical `key = value` rendering; parses back to the same config.
    pub fn to_config_string(&self) -> String {
        let size = self.info_set.map(|s| s.code().to_string()).unwrap_or_else(|| "all".into());
        format!(
            "mean = {}\nvariance = {}\nscheme = {}\ndegree = {}\nsize = {}\np_l = {}\np_h = {}\nm = {}\nh = {}\niters = {}\nburn = {}\nthin = {}\nseed = {}\ntrees = {}\n",
            self.mean,
            self.variance,
            self.scheme,
            self.degree,
            size,
            self.p_l,
            self.p_h,
            self.m,
            self.horizon(),
            self.mcmc.iters,
            self.mcmc.burn,
            self.mcmc.thin,
            self.seed,
            self.bart.n_trees
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_retain_3000_draws() {
        assert_eq!(McmcSettings::default().retained(), 3000);
        let s = McmcSettings::default();
        assert_eq!((0..s.iters).filter(|&i| s.keeps(i)).count(), 3000);
    }

    #[test]
    fn parse_round_trip_and_unknown_keys() {
        let cfg = ModelConfig::parse("mean = GP\nscheme = xalm\nsize = s\nh = 4/3 # comment\n").unwrap();
        assert_eq!(cfg.mean, MeanModel::Gp);
        assert_eq!(cfg.scheme, Scheme::ExpAlmon);
        assert_eq!(cfg.info_set, Some(InfoSet::Small));
        assert_eq!(cfg.h_steps, 4);
        assert_eq!(cfg.p_h, 12);
        assert_eq!(ModelConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
        let err = ModelConfig::parse("mean = GP\nschem = br\n").unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("schem")));
        assert!(ModelConfig::parse("mean = GP\nmean = BLR\n").is_err());
        assert!(ModelConfig::parse("burn = 20000\n").is_err());
    }

    #[test]
    fn labels() {
        let mut c = ModelConfig { mean: MeanModel::Gp, scheme: Scheme::ExpAlmon, ..Default::default() };
        assert_eq!(c.label(), "GP-xalm-hom");
        c.scheme = Scheme::Legendre;
        c.variance = VarianceModel::Sv;
        assert_eq!(c.label(), "GP-leg3-sv");
        c.info_set = Some(InfoSet::Medium);
        assert_eq!(c.label(), "GP-leg3-sv-m");
        let mut d = ModelConfig::default();
        d.apply_label("GP-leg3-sv-m").unwrap();
        assert_eq!(d, c);
        for bad in ["GP", "GP-xalm2-hom", "GP-foo-hom", "GP-br-het", "NN-br-hom"] {
            assert!(d.apply_label(bad).is_err(), "{bad}");
        }
    }
}
