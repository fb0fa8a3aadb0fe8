use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, ForecastConfig, ForecastResult, HarDataset, ModelKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// `(#{resampled statistic ≤ 0} + 1) / (n_resamples + 1)`
    pub p_value: f64,
    pub n_resamples: usize,
    /// Observed `MSE_without − MSE_with` on the out-of-sample rows.
    pub statistic: f64,
    /// Observed `R²_with − R²_without`, absent when R² is undefined.
    pub r2_difference: Option<f64>,
    pub seed: u64,
}

/// Resamples out-of-sample rows with replacement and recomputes the mean
/// squared-error difference from the stored per-row errors. Resample `b`
/// draws from its own derived stream, so the result does not depend on
/// scheduling.
pub fn paired_bootstrap(sq_without: &[f64], sq_with: &[f64], n_resamples: usize, seed: u64) -> Result<(f64, f64)> {
    let n = sq_without.len();
    if n == 0 || sq_with.len() != n {
        return Err(Error::Degenerate(format!(
            "paired bootstrap needs matching non-empty error vectors, got {n} and {}",
            sq_with.len()
        )));
    }
    if n_resamples == 0 {
        return Err(Error::Config("n_resamples must be positive".into()));
    }
    let diff: Vec<f64> = sq_without.iter().zip(sq_with).map(|(a, b)| a - b).collect();
    let observed = diff.iter().sum::<f64>() / n as f64;
    let at_most_zero = (0..n_resamples)
        .into_par_iter()
        .filter(|&b| {
            let mut rng = rng_from(derive_seed(seed, b as u64), tags::BOOTSTRAP);
            let stat: f64 = (0..n).map(|_| diff[rng.random_range(0..n)]).sum::<f64>() / n as f64;
            stat <= 0.0
        })
        .count();
    Ok((observed, (at_most_zero + 1) as f64 / (n_resamples + 1) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub without: ForecastResult,
    pub with: ForecastResult,
    pub bootstrap: BootstrapReport,
}

/// Fits `kind` with and without the instability regressor under the same
/// seed and tests whether adding it lowers out-of-sample error.
pub fn compare_with_without(data: &HarDataset, kind: ModelKind, cfg: &ForecastConfig, seed: u64) -> Result<Comparison> {
    if !data.has_auroc() {
        return Err(Error::Validation("comparison needs a dataset with the auroc column".into()));
    }
    if data.n_oos() == 0 {
        return Err(Error::Degenerate("no out-of-sample rows".into()));
    }
    let without = fit(kind, data, false, cfg, seed)?;
    let with = fit(kind, data, true, cfg, seed)?;
    let (statistic, p_value) = paired_bootstrap(
        &without.squared_errors(data),
        &with.squared_errors(data),
        cfg.n_resamples,
        seed,
    )?;
    let r2_difference = with.r2_oos.zip(without.r2_oos).map(|(a, b)| a - b);
    Ok(Comparison {
        without,
        with,
        bootstrap: BootstrapReport {
            p_value,
            n_resamples: cfg.n_resamples,
            statistic,
            r2_difference,
            seed,
        },
    })
}
