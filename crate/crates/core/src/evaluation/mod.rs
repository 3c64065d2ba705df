//! Scoring rules and forecast comparison.

mod dm;
mod mcs;
mod regression;
mod scores;
mod subsample;
mod table;

pub use dm::{dm_lags, dm_test, DM_MIN_LENGTH, long_run_variance, significance_stars, DmResult};
pub use mcs::{block_bootstrap_indices, model_confidence_set, McsConfig, MCS_MIN_LENGTH, McsResult};
pub use regression::{dummy_regression, DummyCoefficient, Factor};
pub use scores::{
    crps_grid, forecast_losses, quantile_score, weighted_crps, weighted_crps_from_quantiles, Weighting,
    REPORTED_QS_LEVELS,
};
pub use subsample::{covid_split, subsample_masks, RecessionCalendar, Subsample, SubsampleMasks};
pub use table::{LossRecord, LossTable, LOSS_TABLE_HEADER};
