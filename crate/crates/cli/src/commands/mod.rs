pub mod evaluate;
pub mod fit;
pub mod importance;
pub mod predict;
pub mod simulate;

use anyhow::Result;
use gpmidas::ModelConfig;

/// Copies of `base` with mean, scheme, variance and information set taken
/// from each label; an empty list yields `base` itself.
pub fn model_configs(base: &ModelConfig, labels: &[String]) -> Result<Vec<ModelConfig>> {
    if labels.is_empty() {
        return Ok(vec![base.clone()]);
    }
    let mut out = Vec::with_capacity(labels.len());
    for l in labels {
        let mut cfg = base.clone();
        cfg.apply_label(l)?;
        cfg.validate()?;
        if out.iter().any(|c: &ModelConfig| c.label() == cfg.label()) {
            return Err(gpmidas::Error::Config(format!("model '{l}' listed twice")).into());
        }
        out.push(cfg);
    }
    Ok(out)
}
