//! Gibbs orchestration, retained draws and predictive distributions.

mod chain;
mod config;
mod draws;
mod predictive;

pub use chain::{mh_update_xalm, run_chain, XalmMove, HOM_A0, HOM_B0, MAX_FAILURE_SHARE, XALM_PRIOR_SD};
pub use config::{McmcSettings, MeanModel, ModelConfig, VarianceModel, CONFIG_KEYS};
pub use draws::{inefficiency_factor, ChainDiagnostics, DrawsHeader, PosteriorDraws, DRAWS_MAGIC, DRAWS_VERSION};
pub use predictive::{destandardize, draw_predictive, empirical_quantile, sorted_quantile, PredictiveDistribution};
