//! HAR design rows built from a realized-volatility series.

use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicator::IndicatorSeries;
use crate::ingest::VolSeries;

/// Which trailing log-RV averages enter the regression. The daily term is
/// always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarLags {
    pub weekly: bool,
    pub monthly: bool,
}

impl Default for HarLags {
    fn default() -> Self {
        Self {
            weekly: true,
            monthly: false,
        }
    }
}

impl HarLags {
    /// Trailing sessions each lag averages over.
    pub const WEEK: usize = 7;
    pub const MONTH: usize = 22;

    pub fn history_sessions(&self) -> usize {
        if self.monthly {
            Self::MONTH
        } else if self.weekly {
            Self::WEEK
        } else {
            1
        }
    }
}

impl std::str::FromStr for HarLags {
    type Err = Error;

    /// Comma list drawn from `daily`, `weekly`, `monthly`.
    fn from_str(s: &str) -> Result<Self> {
        let mut lags = HarLags {
            weekly: false,
            monthly: false,
        };
        let mut daily = false;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "daily" => daily = true,
                "weekly" => lags.weekly = true,
                "monthly" => lags.monthly = true,
                other => return Err(Error::Config(format!("unknown HAR lag {other:?}"))),
            }
        }
        if !daily {
            return Err(Error::Config("har_lags must include daily".into()));
        }
        Ok(lags)
    }
}

impl std::fmt::Display for HarLags {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("daily")?;
        if self.weekly {
            f.write_str(",weekly")?;
        }
        if self.monthly {
            f.write_str(",monthly")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarRow {
    /// End of the target window.
    pub timestamp: NaiveDateTime,
    pub target: f64,
    pub daily: f64,
    pub weekly: Option<f64>,
    pub monthly: Option<f64>,
    pub auroc: Option<f64>,
}

/// Rows discarded while building a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRows {
    pub history: usize,
    pub flagged_rv: usize,
    pub missing_auroc: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarDataset {
    pub rows: Vec<HarRow>,
    /// First out-of-sample row.
    pub split_index: usize,
    pub lags: HarLags,
    /// Windows per session used as the length of one trailing day.
    pub steps_per_session: usize,
    pub dropped: DroppedRows,
}

impl HarDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_train(&self) -> usize {
        self.split_index
    }

    pub fn n_oos(&self) -> usize {
        self.rows.len() - self.split_index
    }

    pub fn has_auroc(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.auroc.is_some())
    }

    pub fn regressor_names(&self, with_auroc: bool) -> Vec<&'static str> {
        let mut names = vec!["daily"];
        if self.lags.weekly {
            names.push("weekly");
        }
        if self.lags.monthly {
            names.push("monthly");
        }
        if with_auroc {
            names.push("auroc");
        }
        names
    }

    /// Regressor matrix without an intercept column.
    pub fn design(&self, with_auroc: bool) -> Result<Array2<f64>> {
        if with_auroc && !self.has_auroc() {
            return Err(Error::Validation("dataset has no auroc column".into()));
        }
        let k = self.regressor_names(with_auroc).len();
        let mut x = Array2::zeros((self.rows.len(), k));
        for (i, r) in self.rows.iter().enumerate() {
            let mut vals = vec![r.daily];
            vals.extend(r.weekly);
            vals.extend(r.monthly);
            if with_auroc {
                vals.extend(r.auroc);
            }
            for (j, v) in vals.into_iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        Ok(x)
    }

    pub fn targets(&self) -> Array1<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    /// Moves the train/out-of-sample cut so the final `oos_fraction` of rows
    /// (rounded, at least one) is held out.
    pub fn with_oos_fraction(mut self, oos_fraction: f64) -> Result<Self> {
        self.split_index = split_index(self.rows.len(), oos_fraction)?;
        Ok(self)
    }
}

fn split_index(n: usize, oos_fraction: f64) -> Result<usize> {
    if !(oos_fraction > 0.0 && oos_fraction < 1.0) {
        return Err(Error::Config(format!("oos_fraction must lie in (0, 1), got {oos_fraction}")));
    }
    if n < 2 {
        return Err(Error::Degenerate(format!("{n} usable rows, need at least 2")));
    }
    let n_oos = ((n as f64 * oos_fraction).round() as usize).clamp(1, n - 1);
    Ok(n - n_oos)
}

/// Most common number of windows per session.
fn steps_per_session(vol: &VolSeries) -> usize {
    let mut per_day: BTreeMap<chrono::NaiveDate, usize> = BTreeMap::new();
    for t in &vol.timestamps {
        *per_day.entry(t.date()).or_default() += 1;
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for c in per_day.values() {
        *counts.entry(*c).or_default() += 1;
    }
    // ties go to the larger step count
    counts.into_iter().max_by_key(|&(steps, n)| (n, steps)).map_or(1, |(s, _)| s)
}

/// Builds HAR rows. One trailing "day" is the previous `P` windows, where `P`
/// is the usual number of windows per session; its regressor is the log of
/// their summed variance. Weekly and monthly terms average the log-RV of the
/// 7 and 22 trailing days. The instability value of a row is the latest
/// indicator point dated strictly before the target's session; rows where
/// that point is flagged are dropped.
pub fn build_har_dataset(
    vol: &VolSeries,
    indicator: Option<&IndicatorSeries>,
    lags: HarLags,
    oos_fraction: f64,
) -> Result<HarDataset> {
    if vol.timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("volatility timestamps must be strictly increasing".into()));
    }
    let p = steps_per_session(vol);
    let need = lags.history_sessions() * p;
    let day_log = |end: usize| -> Option<f64> {
        let sum: f64 = vol.rv[end - p..end].iter().sum();
        (sum > 0.0 && sum.is_finite()).then(|| sum.ln())
    };
    let mean_of = |tau: usize, days: usize| -> Option<f64> {
        let mut acc = 0.0;
        for j in 0..days {
            acc += day_log(tau - j * p)?;
        }
        Some(acc / days as f64)
    };

    let mut rows = Vec::new();
    let mut dropped = DroppedRows::default();
    for tau in 0..vol.len() {
        if tau < need {
            dropped.history += 1;
            continue;
        }
        let (Some(target), Some(daily)) = (vol.log_rv[tau], day_log(tau)) else {
            dropped.flagged_rv += 1;
            continue;
        };
        let weekly = if lags.weekly { mean_of(tau, HarLags::WEEK) } else { None };
        let monthly = if lags.monthly { mean_of(tau, HarLags::MONTH) } else { None };
        if (lags.weekly && weekly.is_none()) || (lags.monthly && monthly.is_none()) {
            dropped.flagged_rv += 1;
            continue;
        }
        let timestamp = vol.timestamps[tau];
        let auroc = match indicator {
            None => None,
            Some(ind) => match ind.latest_point_before(timestamp.date()).and_then(|pt| pt.auroc) {
                Some(a) => Some(a),
                None => {
                    dropped.missing_auroc += 1;
                    continue;
                }
            },
        };
        rows.push(HarRow {
            timestamp,
            target,
            daily,
            weekly,
            monthly,
            auroc,
        });
    }
    let split_index = split_index(rows.len(), oos_fraction)?;
    Ok(HarDataset {
        rows,
        split_index,
        lags,
        steps_per_session: p,
        dropped,
    })
}
