//! Market-instability indicator from graph auto-encoder edge reconstruction on
//! threshold correlation networks, and HAR volatility forecasting with it.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrnet;
pub mod error;
pub mod forecast;
pub mod gae;
pub mod indicator;
pub mod ingest;
pub mod kv;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod synthgen;

pub use corrnet::{GraphConfig, MarketGraph};
pub use error::{Error, Result};
pub use forecast::{Comparison, ForecastConfig, HarDataset, ModelKind};
pub use gae::{GaeHyper, GaeModel};
pub use indicator::{IndicatorConfig, IndicatorPoint, IndicatorSeries};
pub use ingest::{Horizon, PricePanel, ReturnMatrix, VolSeries};
pub use pipeline::PipelineConfig;
pub use synthgen::Scenario;
