//! Data ingestion, transformations and MIDAS design construction.

pub mod design;
pub mod ingest;
pub mod panel;
pub mod transform;

pub use design::{
    apply_columns, assemble_design, build_hf_lag_vector, fit_columns, hf_lag_vector, DesignMatrix, MidasSample, Standardizer,
};
pub use ingest::{ingest_csv, Frequency, Schema, SeriesFrame};
pub use panel::{Horizon, InfoSet, MixedFrequencyPanel};
pub use transform::{transform_series, TransformCode};
