//! Walk-forward instability indicator: train on the graph ending `t`, score
//! edge reconstruction on the graph ending `t + 1`.

use std::io::{Read, Write};

use chrono::{Datelike, NaiveDate};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrnet::MarketGraph;
use crate::error::{Error, Result};
use crate::gae::{encode, pair_auroc, split_edges, train, GaeHyper, GaeModel, TrainingTrace};
use crate::rng::{derive_seed, rng_from, tags};

/// Which graph's inputs produce the embeddings scored on day `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalEmbedding {
    /// Re-encode with the trained weights on `G_{t+1}`'s adjacency and features.
    #[default]
    TestGraph,
    /// Reuse the embeddings of `G_t`.
    TrainGraph,
}

impl std::str::FromStr for EvalEmbedding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "test_graph" => Ok(Self::TestGraph),
            "train_graph" => Ok(Self::TrainGraph),
            other => Err(Error::Config(format!(
                "eval_embedding must be test_graph or train_graph, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IndicatorConfig {
    /// `hyper.seed` is the base seed; each day trains with a derived seed.
    pub hyper: GaeHyper,
    pub eval_embedding: EvalEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPoint {
    /// Date of the evaluated graph, `t + 1`.
    pub date: NaiveDate,
    pub auroc: Option<f64>,
    pub train_edges: usize,
    pub test_edges: usize,
    pub val_auroc: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
    /// Reason the point is absent.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IndicatorSeries {
    pub points: Vec<IndicatorPoint>,
}

impl IndicatorSeries {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.points.iter().map(|p| p.date).collect()
    }

    pub fn values(&self) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.auroc).collect()
    }

    /// Latest point dated strictly before `day`, flagged or not.
    pub fn latest_point_before(&self, day: NaiveDate) -> Option<&IndicatorPoint> {
        let end = self.points.partition_point(|p| p.date < day);
        end.checked_sub(1).map(|i| &self.points[i])
    }

    /// `date,auroc,train_edges,test_edges,val_auroc,epochs,flag,seed`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["date", "auroc", "train_edges", "test_edges", "val_auroc", "epochs", "flag", "seed"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        for p in &self.points {
            w.write_record([
                p.date.to_string(),
                opt(p.auroc),
                p.train_edges.to_string(),
                p.test_edges.to_string(),
                opt(p.val_auroc),
                p.epochs.to_string(),
                p.flag.clone().unwrap_or_default(),
                p.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |what: &str| Error::Validation(format!("indicator line {line}: bad {what}"));
            let opt = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(what))
                }
            };
            if rec.len() < 8 {
                return Err(bad("column count"));
            }
            points.push(IndicatorPoint {
                date: rec[0].parse().map_err(|_| bad("date"))?,
                auroc: opt(&rec[1], "auroc")?,
                train_edges: rec[2].parse().map_err(|_| bad("train_edges"))?,
                test_edges: rec[3].parse().map_err(|_| bad("test_edges"))?,
                val_auroc: opt(&rec[4], "val_auroc")?,
                epochs: rec[5].parse().map_err(|_| bad("epochs"))?,
                flag: (!rec[6].is_empty()).then(|| rec[6].to_string()),
                seed: rec[7].parse().map_err(|_| bad("seed"))?,
            });
        }
        if points.windows(2).any(|w| w[1].date <= w[0].date) {
            return Err(Error::Validation("indicator dates not strictly increasing".into()));
        }
        Ok(Self { points })
    }
}

/// Seed for the pair evaluated on `date`.
pub fn day_seed(base: u64, date: NaiveDate) -> u64 {
    derive_seed(base, date.num_days_from_ce() as u64)
}

/// AUROC of `model` reconstructing `test_graph`: all its edges against an equal
/// number of its non-edges sampled with `seed`.
pub fn evaluate_next_day(
    model: &GaeModel,
    train_graph: &MarketGraph,
    test_graph: &MarketGraph,
    mode: EvalEmbedding,
    seed: u64,
) -> Result<f64> {
    if train_graph.tickers() != test_graph.tickers() {
        return Err(Error::Validation(format!(
            "ticker universe differs between {} and {}",
            train_graph.window_end(),
            test_graph.window_end()
        )));
    }
    if test_graph.is_empty() {
        return Err(Error::Degenerate(format!("test graph {} has no edges", test_graph.window_end())));
    }
    let non_edges = test_graph.non_edges();
    if non_edges.is_empty() {
        return Err(Error::Degenerate(format!("test graph {} is complete", test_graph.window_end())));
    }
    let mut rng = rng_from(seed, tags::TEST_NEGATIVES);
    let count = test_graph.n_edges().min(non_edges.len());
    let negatives: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, non_edges.len(), count)
        .iter()
        .map(|i| non_edges[i])
        .collect();
    let embedding = match mode {
        EvalEmbedding::TestGraph => encode(model, test_graph)?,
        EvalEmbedding::TrainGraph => encode(model, train_graph)?,
    };
    pair_auroc(&embedding.z, test_graph.edges(), &negatives)
        .ok_or_else(|| Error::Degenerate("single-class evaluation".into()))
}

/// Trained model and trace behind one indicator point.
#[derive(Debug, Clone)]
pub struct DayModel {
    pub model: GaeModel,
    pub trace: TrainingTrace,
}

fn evaluate_pair(
    train_graph: &MarketGraph,
    test_graph: &MarketGraph,
    cfg: &IndicatorConfig,
) -> (IndicatorPoint, Option<DayModel>) {
    let seed = day_seed(cfg.hyper.seed, test_graph.window_end());
    let mut point = IndicatorPoint {
        date: test_graph.window_end(),
        auroc: None,
        train_edges: train_graph.n_edges(),
        test_edges: test_graph.n_edges(),
        val_auroc: None,
        epochs: 0,
        seed,
        flag: None,
    };
    let hyper = GaeHyper { seed, ..cfg.hyper };
    let mut kept = None;
    let outcome = split_edges(train_graph, hyper.split, seed)
        .and_then(|split| train(train_graph, &split, &hyper))
        .and_then(|(model, trace)| {
            point.val_auroc = trace.best_val_auroc.is_finite().then_some(trace.best_val_auroc);
            point.epochs = trace.epochs_run();
            let auroc = evaluate_next_day(&model, train_graph, test_graph, cfg.eval_embedding, seed);
            kept = Some(DayModel { model, trace });
            auroc
        });
    match outcome {
        Ok(a) => point.auroc = Some(a),
        Err(e) => {
            warn!("{}: {e}", point.date);
            point.flag = Some(e.to_string());
        }
    }
    (point, kept)
}

fn check_sequence(graphs: &[MarketGraph], cfg: &IndicatorConfig) -> Result<()> {
    cfg.hyper.validate()?;
    if graphs.len() < 2 {
        return Err(Error::Degenerate(format!("walk-forward needs at least 2 graphs, got {}", graphs.len())));
    }
    if graphs.windows(2).any(|w| w[1].window_end() <= w[0].window_end()) {
        return Err(Error::Validation("graph dates not strictly increasing".into()));
    }
    Ok(())
}

/// One indicator point per consecutive graph pair. Per-day failures become
/// flagged points; results do not depend on thread scheduling.
pub fn walk_forward(graphs: &[MarketGraph], cfg: &IndicatorConfig) -> Result<IndicatorSeries> {
    Ok(walk_forward_with_models(graphs, cfg)?.0)
}

/// [`walk_forward`] that also returns each day's trained model, `None` where
/// training failed.
pub fn walk_forward_with_models(
    graphs: &[MarketGraph],
    cfg: &IndicatorConfig,
) -> Result<(IndicatorSeries, Vec<Option<DayModel>>)> {
    check_sequence(graphs, cfg)?;
    let (points, models) = graphs
        .par_windows(2)
        .map(|w| evaluate_pair(&w[0], &w[1], cfg))
        .unzip();
    Ok((IndicatorSeries { points }, models))
}
