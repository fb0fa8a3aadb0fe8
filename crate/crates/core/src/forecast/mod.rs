//! HAR log-RV forecasting with an optional instability regressor, three
//! regression back-ends and a paired bootstrap test of the regressor's value.

mod bootstrap;
mod har;
mod linear;
mod mlp;
mod tree;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mean_squared_error, r_squared};

pub use bootstrap::{compare_with_without, paired_bootstrap, BootstrapReport, Comparison};
pub use har::{build_har_dataset, DroppedRows, HarDataset, HarLags, HarRow};
pub use linear::fit_linear;
pub use mlp::{fit_mlp, Mlp, MlpGradients, MlpHyper};
pub use tree::{fit_tree, GradientBoostedTrees, TreeHyper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Tree,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Linear, ModelKind::Tree, ModelKind::Mlp];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Tree => "tree",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "tree" => Ok(ModelKind::Tree),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Back-end specific summary of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Linear {
        intercept: f64,
        /// `(regressor, coefficient)` in design order.
        coefficients: Vec<(String, f64)>,
        ridge_fallback: bool,
    },
    Tree {
        rounds: usize,
        base_score: f64,
        leaves: usize,
    },
    Mlp {
        hidden: usize,
        epochs_run: usize,
        best_epoch: usize,
        best_val_loss: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub model_kind: ModelKind,
    pub with_auroc: bool,
    /// Absent when the out-of-sample targets are constant.
    pub r2_oos: Option<f64>,
    pub mse_oos: f64,
    pub n_train: usize,
    pub n_oos: usize,
    /// Out-of-sample predictions in row order.
    pub predictions: Vec<f64>,
    pub fitted: FittedParams,
}

impl ForecastResult {
    pub(crate) fn new(
        data: &HarDataset,
        model_kind: ModelKind,
        with_auroc: bool,
        predictions: Vec<f64>,
        fitted: FittedParams,
    ) -> Self {
        let actual: Vec<f64> = data.rows[data.split_index..].iter().map(|r| r.target).collect();
        Self {
            model_kind,
            with_auroc,
            r2_oos: r_squared(&actual, &predictions),
            mse_oos: mean_squared_error(&actual, &predictions),
            n_train: data.n_train(),
            n_oos: data.n_oos(),
            predictions,
            fitted,
        }
    }

    /// Squared error of each out-of-sample row.
    pub fn squared_errors(&self, data: &HarDataset) -> Vec<f64> {
        data.rows[data.split_index..]
            .iter()
            .zip(&self.predictions)
            .map(|(r, p)| (r.target - p).powi(2))
            .collect()
    }
}

/// Back-end hyper-parameters plus the test settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub lags: HarLags,
    pub oos_fraction: f64,
    pub n_resamples: usize,
    pub ridge_lambda: f64,
    pub tree: TreeHyper,
    pub mlp: MlpHyper,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            lags: HarLags::default(),
            oos_fraction: 0.25,
            n_resamples: 1000,
            ridge_lambda: 1e-8,
            tree: TreeHyper::default(),
            mlp: MlpHyper::default(),
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.oos_fraction > 0.0 && self.oos_fraction < 1.0) {
            return Err(Error::Config(format!("oos_fraction must lie in (0, 1), got {}", self.oos_fraction)));
        }
        if self.n_resamples == 0 {
            return Err(Error::Config("n_resamples must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::Config(format!("ridge_lambda must be non-negative, got {}", self.ridge_lambda)));
        }
        self.tree.validate()?;
        self.mlp.validate()
    }
}

/// Fits one back-end. `seed` drives every random choice of the fit.
pub fn fit(kind: ModelKind, data: &HarDataset, with_auroc: bool, cfg: &ForecastConfig, seed: u64) -> Result<ForecastResult> {
    match kind {
        ModelKind::Linear => fit_linear(data, with_auroc, cfg.ridge_lambda),
        ModelKind::Tree => fit_tree(data, with_auroc, &cfg.tree, seed),
        ModelKind::Mlp => fit_mlp(data, with_auroc, &cfg.mlp, seed),
    }
}

/// `timestamp,target,without,with` for the out-of-sample rows of a comparison.
pub fn write_predictions_csv<W: Write>(data: &HarDataset, cmp: &Comparison, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["timestamp", "target", "without_auroc", "with_auroc"])?;
    for ((row, a), b) in data.rows[data.split_index..]
        .iter()
        .zip(&cmp.without.predictions)
        .zip(&cmp.with.predictions)
    {
        w.write_record([
            row.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            format!("{:?}", row.target),
            format!("{a:?}"),
            format!("{b:?}"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn check_training_rows(data: &HarDataset, min: usize) -> Result<()> {
    if data.n_train() < min {
        return Err(Error::Degenerate(format!(
            "{} training rows, need at least {min}",
            data.n_train()
        )));
    }
    if data.n_oos() == 0 {
        return Err(Error::Degenerate("no out-of-sample rows".into()));
    }
    Ok(())
}
