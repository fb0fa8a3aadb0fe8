//! Cached pipeline stages. Each stage checks its manifest, rebuilds its
//! upstream first, and refuses to rebuild anything under `--frozen`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use log::info;
use netvol::corrnet::{graph_sequence, GraphHeader, MarketGraph};
use netvol::forecast::{write_predictions_csv, BootstrapReport, DroppedRows, FittedParams, ForecastResult, ModelKind};
use netvol::indicator::{walk_forward_with_models, IndicatorSeries};
use netvol::ingest::{load_price_csv, log_returns, Horizon, ReturnMatrix, VolSeries};
use netvol::pipeline;
use netvol::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{file_hash, RunConfig, FORECAST_KEYS, GRAPH_KEYS, INDICATOR_KEYS, INGEST_KEYS, REPORT_KEYS};
use crate::report;
use crate::workspace::{read_json, write_json, Freshness, Workspace, CODE_VERSION};

pub const RETURNS: &str = "returns";
pub const GRAPHS: &str = "graphs";
pub const MODELS: &str = "models";
pub const INDICATOR: &str = "indicator";
pub const FORECAST: &str = "forecast";
pub const REPORT: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub r2_oos: Option<f64>,
    pub mse_oos: f64,
    pub n_train: usize,
    pub n_oos: usize,
    pub fitted: FittedParams,
}

impl From<&ForecastResult> for FitSummary {
    fn from(r: &ForecastResult) -> Self {
        Self {
            r2_oos: r.r2_oos,
            mse_oos: r.mse_oos,
            n_train: r.n_train,
            n_oos: r.n_oos,
            fitted: r.fitted.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResults {
    pub model_kind: ModelKind,
    pub without_auroc: FitSummary,
    pub with_auroc: FitSummary,
    pub bootstrap: BootstrapReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFile {
    pub config_hash: String,
    pub code_version: String,
    pub horizon: Horizon,
    pub rows: usize,
    pub dropped: DroppedRows,
    pub models: Vec<ModelResults>,
}

pub struct Runner {
    pub cfg: RunConfig,
    pub ws: Workspace,
    frozen: bool,
    input_hash: std::sync::OnceLock<String>,
}

impl Runner {
    pub fn new(cfg: RunConfig, frozen: bool) -> Self {
        let ws = Workspace::new(cfg.workspace.clone());
        Self {
            cfg,
            ws,
            frozen,
            input_hash: std::sync::OnceLock::new(),
        }
    }

    fn input(&self) -> Result<&PathBuf> {
        let input = self
            .cfg
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("config has no input path".into()))?;
        if !input.is_file() {
            return Err(Error::Config(format!("input file {} does not exist", input.display())));
        }
        Ok(input)
    }

    pub fn ingest_hash(&self) -> Result<String> {
        let input = match self.input_hash.get() {
            Some(h) => h.clone(),
            None => {
                let h = file_hash(self.input()?)?;
                self.input_hash.get_or_init(|| h).clone()
            }
        };
        Ok(self.cfg.stage_hash(RETURNS, "", &input, INGEST_KEYS))
    }

    pub fn graphs_hash(&self) -> Result<String> {
        Ok(self.cfg.stage_hash(GRAPHS, &self.ingest_hash()?, "", GRAPH_KEYS))
    }

    pub fn indicator_hash(&self) -> Result<String> {
        Ok(self.cfg.stage_hash(INDICATOR, &self.graphs_hash()?, "", INDICATOR_KEYS))
    }

    pub fn forecast_hash(&self) -> Result<String> {
        Ok(self.cfg.stage_hash(FORECAST, &self.indicator_hash()?, "", FORECAST_KEYS))
    }

    pub fn report_hash(&self) -> Result<String> {
        let truth = match &self.cfg.truth {
            Some(p) if p.is_file() => file_hash(p)?,
            Some(p) => return Err(Error::Config(format!("truth file {} does not exist", p.display()))),
            None => String::new(),
        };
        Ok(self.cfg.stage_hash(REPORT, &self.forecast_hash()?, &truth, REPORT_KEYS))
    }

    /// Runs `build` unless every directory in `stages` is fresh for `hash`.
    fn cached(&self, stages: &[&str], hash: &str, build: impl FnOnce() -> Result<()>) -> Result<()> {
        let mut reason = None;
        for stage in stages {
            match self.ws.freshness(stage, hash)? {
                Freshness::Fresh => {}
                Freshness::Missing => reason = reason.or(Some(format!("{stage} artifacts missing"))),
                Freshness::Stale(why) => reason = reason.or(Some(format!("{stage} artifacts stale: {why}"))),
            }
        }
        let Some(reason) = reason else {
            info!("{}: cache hit", stages[0]);
            return Ok(());
        };
        if self.frozen {
            return Err(Error::Validation(format!("{reason}; --frozen forbids rebuilding")));
        }
        info!("{}: building ({reason})", stages[0]);
        for stage in stages {
            self.ws.reset(stage)?;
        }
        build()?;
        for stage in stages {
            self.ws.commit(stage, hash)?;
        }
        Ok(())
    }

    pub fn ingest(&self) -> Result<()> {
        let hash = self.ingest_hash()?;
        self.cached(&[RETURNS], &hash, || {
            let loaded = load_price_csv(self.input()?, &self.cfg.ingest)?;
            let returns = log_returns(&loaded.panel, self.cfg.ingest.include_overnight)?;
            let (vol, daily) = pipeline::volatility(&returns, &self.cfg.pipeline)?;
            returns.write_csv(BufWriter::new(File::create(self.ws.path(RETURNS, "returns.csv"))?))?;
            vol.write_csv(BufWriter::new(File::create(self.ws.path(RETURNS, "vol.csv"))?))?;
            daily.write_csv(BufWriter::new(File::create(self.ws.path(RETURNS, "daily.csv"))?))?;
            let r = &loaded.report;
            let summary = serde_json::json!({
                "config_hash": hash,
                "code_version": CODE_VERSION,
                "tickers": returns.tickers(),
                "bars": returns.n_bars(),
                "sessions": returns.sessions().len(),
                "horizon": self.cfg.pipeline.horizon,
                "vol_windows": vol.len(),
                "dropped_tickers": r.dropped,
                "filled_cells": r.filled,
                "inserted_bars": r.inserted_bars,
                "outside_session_rows": r.outside_session,
            });
            write_json(&self.ws.path(RETURNS, "ingest.json"), &summary)
        })
    }

    pub fn graphs(&self) -> Result<()> {
        self.ingest()?;
        let hash = self.graphs_hash()?;
        self.cached(&[GRAPHS], &hash, || {
            let graphs = graph_sequence(&self.read_returns()?, &self.cfg.pipeline.graph)?;
            let headers: Vec<GraphHeader> = graphs.iter().map(MarketGraph::header).collect();
            for g in &graphs {
                let day = g.window_end();
                g.write_edges_csv(BufWriter::new(File::create(self.ws.path(GRAPHS, &format!("{day}.edges.csv")))?))?;
                g.write_features_csv(BufWriter::new(File::create(
                    self.ws.path(GRAPHS, &format!("{day}.features.csv")),
                )?))?;
            }
            write_json(&self.ws.path(GRAPHS, "graphs.json"), &headers)
        })
    }

    pub fn indicator(&self) -> Result<()> {
        self.graphs()?;
        let hash = self.indicator_hash()?;
        self.cached(&[INDICATOR, MODELS], &hash, || {
            let graphs = self.read_graphs()?;
            let (series, models) = walk_forward_with_models(&graphs, &self.cfg.pipeline.seeded_indicator())?;
            series.write_csv(BufWriter::new(File::create(self.ws.path(INDICATOR, "indicator.csv"))?))?;
            for ((point, day), train_graph) in series.points.iter().zip(&models).zip(&graphs) {
                let Some(day) = day else { continue };
                let stem = point.date.to_string();
                day.model.write_checkpoint(
                    BufWriter::new(File::create(self.ws.path(MODELS, &format!("{stem}.json")))?),
                    BufWriter::new(File::create(self.ws.path(MODELS, &format!("{stem}.weights.csv")))?),
                    Some(train_graph.window_end()),
                )?;
                day.trace
                    .write_csv(BufWriter::new(File::create(self.ws.path(MODELS, &format!("{stem}.trace.csv")))?))?;
            }
            let flagged = series.points.iter().filter(|p| p.flag.is_some()).count();
            info!("indicator: {} points, {flagged} flagged", series.len());
            Ok(())
        })
    }

    pub fn forecast(&self) -> Result<()> {
        self.indicator()?;
        let hash = self.forecast_hash()?;
        self.cached(&[FORECAST], &hash, || {
            let vol = self.read_vol()?;
            let series = self.read_indicator()?;
            let (data, comparisons) = pipeline::forecast(&vol, &series, &self.cfg.pipeline)?;
            let mut rows = csv::Writer::from_path(self.ws.path(FORECAST, "dataset.csv"))?;
            rows.write_record(["timestamp", "target", "daily", "weekly", "monthly", "auroc", "out_of_sample"])?;
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
            for (i, r) in data.rows.iter().enumerate() {
                rows.write_record([
                    r.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
                    format!("{:?}", r.target),
                    format!("{:?}", r.daily),
                    opt(r.weekly),
                    opt(r.monthly),
                    opt(r.auroc),
                    (i >= data.split_index).to_string(),
                ])?;
            }
            rows.flush()?;
            for c in &comparisons {
                let name = format!("predictions_{}.csv", c.with.model_kind);
                write_predictions_csv(&data, c, BufWriter::new(File::create(self.ws.path(FORECAST, &name))?))?;
                info!(
                    "forecast {}: r2 {:?} -> {:?}, p = {:.4}",
                    c.with.model_kind, c.without.r2_oos, c.with.r2_oos, c.bootstrap.p_value
                );
            }
            let file = ForecastFile {
                config_hash: hash.clone(),
                code_version: CODE_VERSION.to_string(),
                horizon: self.cfg.pipeline.horizon,
                rows: data.len(),
                dropped: data.dropped,
                models: comparisons
                    .iter()
                    .map(|c| ModelResults {
                        model_kind: c.with.model_kind,
                        without_auroc: (&c.without).into(),
                        with_auroc: (&c.with).into(),
                        bootstrap: c.bootstrap.clone(),
                    })
                    .collect(),
            };
            write_json(&self.ws.path(FORECAST, "results.json"), &file)
        })
    }

    pub fn report(&self) -> Result<()> {
        self.forecast()?;
        let hash = self.report_hash()?;
        self.cached(&[REPORT], &hash, || report::build(self, &hash))
    }

    pub fn read_returns(&self) -> Result<ReturnMatrix> {
        let f = File::open(self.ws.path(RETURNS, "returns.csv"))?;
        ReturnMatrix::read_csv(BufReader::new(f), self.cfg.ingest.bar_interval)
    }

    pub fn read_vol(&self) -> Result<VolSeries> {
        let f = File::open(self.ws.path(RETURNS, "vol.csv"))?;
        VolSeries::read_csv(BufReader::new(f), self.cfg.pipeline.horizon)
    }

    pub fn read_daily(&self) -> Result<VolSeries> {
        let f = File::open(self.ws.path(RETURNS, "daily.csv"))?;
        VolSeries::read_csv(BufReader::new(f), Horizon::Session)
    }

    pub fn read_graphs(&self) -> Result<Vec<MarketGraph>> {
        let headers: Vec<GraphHeader> = read_json(&self.ws.path(GRAPHS, "graphs.json"))?;
        headers
            .iter()
            .map(|h| {
                let day = h.window_end;
                MarketGraph::read(
                    h,
                    BufReader::new(File::open(self.ws.path(GRAPHS, &format!("{day}.edges.csv")))?),
                    BufReader::new(File::open(self.ws.path(GRAPHS, &format!("{day}.features.csv")))?),
                )
            })
            .collect()
    }

    pub fn read_indicator(&self) -> Result<IndicatorSeries> {
        IndicatorSeries::read_csv(BufReader::new(File::open(self.ws.path(INDICATOR, "indicator.csv"))?))
    }

    pub fn read_forecast(&self) -> Result<ForecastFile> {
        read_json(&self.ws.path(FORECAST, "results.json"))
    }

    pub fn read_truth(&self) -> Result<Option<(Vec<chrono::NaiveDate>, Vec<u8>)>> {
        match &self.cfg.truth {
            None => Ok(None),
            Some(p) => Ok(Some(netvol::synthgen::read_regimes(BufReader::new(File::open(p)?))?)),
        }
    }
}

/// Writes the generated market next to an effective copy of the scenario.
pub fn synth(scenario: &netvol::Scenario, out: &std::path::Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let market = netvol::synthgen::generate(scenario)?;
    market.write(out.join("prices.csv"), out.join("truth.csv"))?;
    fs::write(out.join("scenario.conf"), scenario.to_kv())?;
    info!(
        "synth: {} tickers x {} bars written to {}",
        market.panel.n_tickers(),
        market.panel.n_bars(),
        out.display()
    );
    Ok(())
}
