//! Stage composition shared by the command-line tool and the experiment suites.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corrnet::{graph_sequence, GraphConfig, MarketGraph};
use crate::error::{Error, Result};
use crate::forecast::{build_har_dataset, compare_with_without, Comparison, ForecastConfig, HarDataset, ModelKind};
use crate::indicator::{walk_forward, IndicatorConfig, IndicatorSeries};
use crate::ingest::{realized_volatility, Horizon, IndexWeighting, ReturnMatrix, VolSeries};
use crate::metrics::spearman;
use crate::synthgen::SHIFTED;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub weighting: IndexWeighting,
    /// Forecast target window.
    pub horizon: Horizon,
    pub graph: GraphConfig,
    pub indicator: IndicatorConfig,
    pub forecast: ForecastConfig,
    pub models: Vec<ModelKind>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            weighting: IndexWeighting::Equal,
            horizon: Horizon::Bars(60),
            graph: GraphConfig::default(),
            indicator: IndicatorConfig::default(),
            forecast: ForecastConfig::default(),
            models: vec![ModelKind::Linear],
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Indicator settings with the run seed applied.
    pub fn seeded_indicator(&self) -> IndicatorConfig {
        let mut cfg = self.indicator;
        cfg.hyper.seed = self.seed;
        cfg
    }
}

/// Target-horizon and per-session realized variance.
pub fn volatility(returns: &ReturnMatrix, cfg: &PipelineConfig) -> Result<(VolSeries, VolSeries)> {
    let vol = realized_volatility(returns, cfg.horizon, &cfg.weighting)?;
    let daily = realized_volatility(returns, Horizon::Session, &cfg.weighting)?;
    Ok((vol, daily))
}

/// Fits every configured back-end with and without the indicator.
pub fn forecast(
    vol: &VolSeries,
    indicator: &IndicatorSeries,
    cfg: &PipelineConfig,
) -> Result<(HarDataset, Vec<Comparison>)> {
    if cfg.models.is_empty() {
        return Err(Error::Config("no forecasting models selected".into()));
    }
    let data = build_har_dataset(vol, Some(indicator), cfg.forecast.lags, cfg.forecast.oos_fraction)?;
    let comparisons = cfg
        .models
        .iter()
        .map(|&kind| compare_with_without(&data, kind, &cfg.forecast, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((data, comparisons))
}

/// Indicator values paired with the log-RV of the first session after each
/// point. Flagged points and zero-variance sessions are skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NextWindowPairs {
    pub dates: Vec<NaiveDate>,
    pub auroc: Vec<f64>,
    pub log_rv: Vec<f64>,
}

impl NextWindowPairs {
    pub fn new(indicator: &IndicatorSeries, daily: &VolSeries) -> Self {
        let mut out = Self::default();
        for p in &indicator.points {
            let Some(a) = p.auroc else { continue };
            let next = daily.timestamps.partition_point(|t| t.date() <= p.date);
            if let Some(Some(l)) = daily.log_rv.get(next) {
                out.dates.push(p.date);
                out.auroc.push(a);
                out.log_rv.push(*l);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.auroc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.auroc.is_empty()
    }

    pub fn spearman(&self) -> Option<f64> {
        spearman(&self.auroc, &self.log_rv)
    }
}

/// Mean indicator value on stable and on shifted days of a known schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimeMeans {
    pub stable: Option<f64>,
    pub shifted: Option<f64>,
    pub n_stable: usize,
    pub n_shifted: usize,
}

impl RegimeMeans {
    /// `regimes[i]` labels session `dates[i]`; points on unknown dates are ignored.
    pub fn new(indicator: &IndicatorSeries, dates: &[NaiveDate], regimes: &[u8]) -> Self {
        let (mut stable, mut shifted) = (Vec::new(), Vec::new());
        for p in &indicator.points {
            let (Some(a), Ok(i)) = (p.auroc, dates.binary_search(&p.date)) else { continue };
            if regimes[i] == SHIFTED {
                shifted.push(a);
            } else {
                stable.push(a);
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        Self {
            stable: mean(&stable),
            shifted: mean(&shifted),
            n_stable: stable.len(),
            n_shifted: shifted.len(),
        }
    }

    /// Stable mean minus shifted mean.
    pub fn gap(&self) -> Option<f64> {
        Some(self.stable? - self.shifted?)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub graphs: Vec<MarketGraph>,
    pub indicator: IndicatorSeries,
    pub vol: VolSeries,
    pub daily: VolSeries,
    pub dataset: HarDataset,
    pub comparisons: Vec<Comparison>,
}

impl PipelineOutput {
    pub fn pairs(&self) -> NextWindowPairs {
        NextWindowPairs::new(&self.indicator, &self.daily)
    }
}

/// Graphs and indicator only.
pub fn indicator_run(returns: &ReturnMatrix, cfg: &PipelineConfig) -> Result<(Vec<MarketGraph>, IndicatorSeries)> {
    let graphs = graph_sequence(returns, &cfg.graph)?;
    let indicator = walk_forward(&graphs, &cfg.seeded_indicator())?;
    Ok((graphs, indicator))
}

/// Every stage in memory, from returns to the with/without comparisons.
pub fn run(returns: &ReturnMatrix, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let (graphs, indicator) = indicator_run(returns, cfg)?;
    let (vol, daily) = volatility(returns, cfg)?;
    let (dataset, comparisons) = forecast(&vol, &indicator, cfg)?;
    Ok(PipelineOutput {
        graphs,
        indicator,
        vol,
        daily,
        dataset,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicator::IndicatorPoint;
    use chrono::NaiveDateTime;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 3, d).unwrap()
    }

    fn point(d: u32, auroc: Option<f64>) -> IndicatorPoint {
        IndicatorPoint {
            date: day(d),
            auroc,
            train_edges: 0,
            test_edges: 0,
            val_auroc: None,
            epochs: 0,
            seed: 0,
            flag: auroc.is_none().then(|| "flagged".into()),
        }
    }

    #[test]
    fn pairs_use_the_next_session() {
        let close = |d: u32| -> NaiveDateTime { day(d).and_hms_opt(16, 0, 0).unwrap() };
        let daily = VolSeries::from_rv(Horizon::Session, vec![close(4), close(5), close(7)], vec![1.0, 0.0, 4.0]);
        let series = IndicatorSeries {
            points: vec![point(3, Some(0.9)), point(4, Some(0.8)), point(5, Some(0.7)), point(6, None), point(7, Some(0.5))],
        };
        let pairs = NextWindowPairs::new(&series, &daily);
        // day 4 maps to the zero-variance session; day 7 has no successor
        assert_eq!(pairs.dates, vec![day(3), day(5)]);
        assert_eq!(pairs.log_rv, vec![0.0, 4f64.ln()]);
    }

    #[test]
    fn regime_means_split_by_label() {
        let series = IndicatorSeries {
            points: vec![point(1, Some(1.0)), point(2, Some(0.8)), point(3, Some(0.4)), point(4, None)],
        };
        let dates = [day(1), day(2), day(3), day(4)];
        let m = RegimeMeans::new(&series, &dates, &[1, 1, SHIFTED, SHIFTED]);
        assert_eq!(m.stable, Some(0.9));
        assert_eq!(m.shifted, Some(0.4));
        assert_eq!((m.n_stable, m.n_shifted), (2, 1));
        assert!((m.gap().unwrap() - 0.5).abs() < 1e-15);
    }
}
