//! Bayesian mixed-frequency nowcasting: MIDAS weighting, Gaussian-process,
//! horseshoe-linear and BART conditional means, stochastic volatility, and
//! forecast evaluation.

pub mod bart;
pub mod blr;
pub mod data;
pub mod dgp;
pub mod gp;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod midas_basis;
pub mod rng;
pub mod sampler;
pub mod varimp;
pub mod volatility;

pub use data::{
    assemble_design, ingest_csv, DesignMatrix, Horizon, InfoSet, MidasSample, MixedFrequencyPanel, Schema,
    Standardizer,
};
pub use error::{Error, Result};
pub use midas_basis::{build_weight_matrix, MidasWeightMatrix, Scheme};
pub use sampler::{run_chain, draw_predictive, ModelConfig, PosteriorDraws, PredictiveDistribution};
