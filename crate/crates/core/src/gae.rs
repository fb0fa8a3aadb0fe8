//! Graph auto-encoder: two-layer GCN encoder, inner-product decoder, BCE loss
//! with hand-derived gradients, and the early-stopped training loop.

use std::io::{Read, Write};

use chrono::NaiveDate;
use log::debug;
use ndarray::{Array2, ArrayView1, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corrnet::{normalized_adjacency, MarketGraph};
use crate::error::{Error, Result};
use crate::linalg::Csr;
use crate::metrics::{auroc, ScoredLabels};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{rng_from, tags};

/// Probabilities are clamped into `[EPS, 1 − EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.85,
            val: 0.05,
            test: 0.10,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(*f > 0.0)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaeHyper {
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub neg_ratio: usize,
    pub split: SplitFractions,
    pub seed: u64,
}

impl Default for GaeHyper {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            latent_dim: 16,
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 20,
            neg_ratio: 1,
            split: SplitFractions::default(),
            seed: 0,
        }
    }
}

impl GaeHyper {
    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.hidden_dim == 0 || self.latent_dim == 0 {
            return Err(Error::Config("hidden_dim and latent_dim must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.neg_ratio == 0 {
            return Err(Error::Config("neg_ratio must be at least 1".into()));
        }
        Ok(())
    }
}

/// Normalized adjacency with the first propagation `Ã·X` precomputed.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub a: Csr,
    pub ax: Array2<f64>,
}

impl GraphInput {
    pub fn from_graph(graph: &MarketGraph) -> Self {
        let a = graph.norm_adjacency().clone();
        let ax = a.matmul(graph.features());
        Self { a, ax }
    }

    /// Same node features, adjacency restricted to `edges`.
    pub fn with_edges(graph: &MarketGraph, edges: &[(usize, usize)]) -> Self {
        let n = graph.n_nodes();
        let mut adjacency = Array2::from_elem((n, n), false);
        for &(u, v) in edges {
            adjacency[[u, v]] = true;
            adjacency[[v, u]] = true;
        }
        let a = normalized_adjacency(&adjacency);
        let ax = a.matmul(graph.features());
        Self { a, ax }
    }

    pub fn n_nodes(&self) -> usize {
        self.ax.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaeModel {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
    pub hyper: GaeHyper,
    pub adam: Adam,
}

/// Latent node vectors, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub z: Array2<f64>,
}

impl Embedding {
    /// Inner product `z_u·z_v`, the decoder logit.
    pub fn logit(&self, u: usize, v: usize) -> f64 {
        self.z.row(u).dot(&self.z.row(v))
    }

    pub fn probability(&self, u: usize, v: usize) -> f64 {
        decode_edge(self.z.row(u), self.z.row(v))
    }
}

/// Intermediate values of one encoder pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `Ã X W0`
    pub p: Array2<f64>,
    /// `Ã ReLU(P)`
    pub q: Array2<f64>,
    pub z: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w0: Array2<f64>,
    pub w1: Array2<f64>,
}

/// Labelled node pair for the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelledPair {
    pub u: usize,
    pub v: usize,
    pub label: bool,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit))
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `σ(z_u·z_v)` clamped into `[PROB_EPS, 1 − PROB_EPS]`.
pub fn decode_edge(z_u: ArrayView1<'_, f64>, z_v: ArrayView1<'_, f64>) -> f64 {
    sigmoid(z_u.dot(&z_v)).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean binary cross-entropy with probabilities clamped away from 0 and 1.
pub fn bce_loss(labels: &[bool], probs: &[f64]) -> f64 {
    assert_eq!(labels.len(), probs.len(), "labels and probabilities differ in length");
    let total: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / labels.len() as f64
}

impl GaeModel {
    /// Glorot-initialized weights drawn from the hyper seed.
    pub fn new(n_features: usize, hyper: GaeHyper) -> Self {
        let mut rng = rng_from(hyper.seed, tags::WEIGHT_INIT);
        let w0 = glorot(&mut rng, n_features, hyper.hidden_dim);
        let w1 = glorot(&mut rng, hyper.hidden_dim, hyper.latent_dim);
        Self::from_weights(w0, w1, hyper)
    }

    pub fn from_weights(w0: Array2<f64>, w1: Array2<f64>, hyper: GaeHyper) -> Self {
        let adam = Adam::new(
            AdamConfig {
                learning_rate: hyper.learning_rate,
                ..AdamConfig::default()
            },
            &[w0.dim(), w1.dim()],
        );
        Self { w0, w1, hyper, adam }
    }

    pub fn n_features(&self) -> usize {
        self.w0.nrows()
    }

    fn check_input(&self, input: &GraphInput) -> Result<()> {
        if input.ax.ncols() != self.w0.nrows() {
            return Err(Error::Config(format!(
                "graph has {} features but the model expects {}",
                input.ax.ncols(),
                self.w0.nrows()
            )));
        }
        if self.w1.nrows() != self.w0.ncols() {
            return Err(Error::Config("w0 and w1 disagree on the hidden width".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &GraphInput) -> Result<Forward> {
        self.check_input(input)?;
        let p = input.ax.dot(&self.w0);
        let h = p.mapv(|v| v.max(0.0));
        let q = input.a.matmul(&h);
        let z = q.dot(&self.w1);
        Ok(Forward { p, q, z })
    }

    pub fn encode_input(&self, input: &GraphInput) -> Result<Embedding> {
        Ok(Embedding { z: self.forward(input)?.z })
    }

    /// Mean BCE of `batch` under the cached forward pass.
    pub fn batch_loss(forward: &Forward, batch: &[LabelledPair]) -> f64 {
        let labels: Vec<bool> = batch.iter().map(|e| e.label).collect();
        let probs: Vec<f64> = batch
            .iter()
            .map(|e| decode_edge(forward.z.row(e.u), forward.z.row(e.v)))
            .collect();
        bce_loss(&labels, &probs)
    }

    /// Reverse-mode gradients of the mean batch BCE with respect to `w0`, `w1`.
    pub fn backward(&self, input: &GraphInput, forward: &Forward, batch: &[LabelledPair]) -> Gradients {
        let b = batch.len() as f64;
        let z = &forward.z;
        let mut dz = Array2::<f64>::zeros(z.dim());
        for e in batch {
            let s = z.row(e.u).dot(&z.row(e.v));
            let g = (sigmoid(s) - if e.label { 1.0 } else { 0.0 }) / b;
            let zu = z.row(e.u).to_owned();
            let zv = z.row(e.v).to_owned();
            dz.row_mut(e.u).scaled_add(g, &zv);
            dz.row_mut(e.v).scaled_add(g, &zu);
        }
        let w1 = forward.q.t().dot(&dz);
        let dq = dz.dot(&self.w1.t());
        let mut dp = input.a.matmul(&dq);
        Zip::from(&mut dp).and(&forward.p).for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        let w0 = input.ax.t().dot(&dp);
        Gradients { w0, w1 }
    }

    pub fn adam_step(&mut self, grads: &Gradients) -> Result<()> {
        self.adam.step(&mut [&mut self.w0, &mut self.w1], &[&grads.w0, &grads.w1])
    }

    /// Writes a JSON header and a `matrix,row,col,value` weight payload.
    pub fn write_checkpoint<H: Write, P: Write>(
        &self,
        header: H,
        payload: P,
        window_end: Option<NaiveDate>,
    ) -> Result<()> {
        let head = CheckpointHeader {
            n_features: self.w0.nrows(),
            hidden_dim: self.w0.ncols(),
            latent_dim: self.w1.ncols(),
            hyper: self.hyper,
            seed: self.hyper.seed,
            window_end,
        };
        serde_json::to_writer_pretty(header, &head)?;
        let mut w = csv::Writer::from_writer(payload);
        w.write_record(["matrix", "row", "col", "value"])?;
        for (name, m) in [("w0", &self.w0), ("w1", &self.w1)] {
            for ((r, c), v) in m.indexed_iter() {
                w.write_record([name.to_string(), r.to_string(), c.to_string(), format!("{v:?}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<H: Read, P: Read>(header: H, payload: P) -> Result<(Self, CheckpointHeader)> {
        let head: CheckpointHeader = serde_json::from_reader(header)?;
        let mut w0 = Array2::from_elem((head.n_features, head.hidden_dim), f64::NAN);
        let mut w1 = Array2::from_elem((head.hidden_dim, head.latent_dim), f64::NAN);
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(payload);
        for rec in r.deserialize::<(String, usize, usize, f64)>() {
            let (name, row, col, value) = rec?;
            let target = match name.as_str() {
                "w0" => &mut w0,
                "w1" => &mut w1,
                other => return Err(Error::Validation(format!("unknown weight matrix {other:?}"))),
            };
            *target
                .get_mut((row, col))
                .ok_or_else(|| Error::Validation(format!("weight index ({row}, {col}) out of range for {name}")))? = value;
        }
        if w0.iter().chain(w1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("checkpoint payload is incomplete".into()));
        }
        Ok((Self::from_weights(w0, w1, head.hyper), head))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub n_features: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub hyper: GaeHyper,
    pub seed: u64,
    pub window_end: Option<NaiveDate>,
}

/// Embeds a graph with its full normalized adjacency.
pub fn encode(model: &GaeModel, graph: &MarketGraph) -> Result<Embedding> {
    model.encode_input(&GraphInput::from_graph(graph))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
    pub seed: u64,
}

/// Minimum edge count accepted by [`split_edges`].
pub const MIN_SPLIT_EDGES: usize = 10;

/// Uniform partition of the edges; validation and test sets get at least one
/// edge each and as many disjoint sampled non-edges.
pub fn split_edges(graph: &MarketGraph, fractions: SplitFractions, seed: u64) -> Result<EdgeSplit> {
    fractions.validate()?;
    let n_edges = graph.n_edges();
    if n_edges < MIN_SPLIT_EDGES {
        return Err(Error::Degenerate(format!(
            "graph ending {} has {n_edges} edges, need at least {MIN_SPLIT_EDGES} to split",
            graph.window_end()
        )));
    }
    let n_val = ((n_edges as f64 * fractions.val).floor() as usize).max(1);
    let n_test = ((n_edges as f64 * fractions.test).floor() as usize).max(1);
    if n_val + n_test >= n_edges {
        return Err(Error::Degenerate("no training edges left after the split".into()));
    }
    let non_edges = graph.non_edges();
    if non_edges.is_empty() {
        return Err(Error::Degenerate("no negatives available: graph is complete".into()));
    }
    if non_edges.len() < n_val + n_test {
        return Err(Error::Degenerate(format!(
            "{} non-edges cannot supply {} validation and test negatives",
            non_edges.len(),
            n_val + n_test
        )));
    }
    let mut rng = rng_from(seed, tags::EDGE_SPLIT);
    let mut edges = graph.edges().to_vec();
    edges.shuffle(&mut rng);
    let test_pos = edges[..n_test].to_vec();
    let val_pos = edges[n_test..n_test + n_val].to_vec();
    let train_pos = edges[n_test + n_val..].to_vec();
    let picks = rand::seq::index::sample(&mut rng, non_edges.len(), n_val + n_test);
    let picked: Vec<(usize, usize)> = picks.iter().map(|i| non_edges[i]).collect();
    Ok(EdgeSplit {
        train_pos,
        val_pos,
        test_pos,
        val_neg: picked[..n_val].to_vec(),
        test_neg: picked[n_val..].to_vec(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: f64,
    pub val_auroc: f64,
    /// BCE on the validation positives and negatives.
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    pub best_epoch: usize,
    pub best_val_auroc: f64,
}

impl TrainingTrace {
    pub fn epochs_run(&self) -> usize {
        self.rows.len()
    }

    /// `epoch,loss,val_auroc,val_loss`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["epoch", "loss", "val_auroc", "val_loss"])?;
        for r in &self.rows {
            w.write_record([
                r.epoch.to_string(),
                format!("{:?}", r.loss),
                format!("{:?}", r.val_auroc),
                format!("{:?}", r.val_loss),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ranks pairs by decoder logit, which orders them exactly as the clamped
/// probabilities do but without ties from saturation.
pub fn pair_auroc(z: &Array2<f64>, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Option<f64> {
    let score = |&(u, v): &(usize, usize)| z.row(u).dot(&z.row(v));
    let pos: Vec<f64> = pos.iter().map(score).collect();
    let neg: Vec<f64> = neg.iter().map(score).collect();
    ScoredLabels::from_pos_neg(&pos, &neg).ok().and_then(|d| auroc(&d))
}

/// Full-batch training on the split's training edges with fresh negatives each
/// epoch. The encoder sees only training edges. Returns the weights of the best
/// validation epoch.
pub fn train(graph: &MarketGraph, split: &EdgeSplit, hyper: &GaeHyper) -> Result<(GaeModel, TrainingTrace)> {
    hyper.validate()?;
    if graph.is_empty() || split.train_pos.is_empty() {
        return Err(Error::Degenerate(format!(
            "graph ending {} has no training edges",
            graph.window_end()
        )));
    }
    if split.val_pos.is_empty() || split.val_neg.is_empty() {
        return Err(Error::Degenerate("validation split is empty".into()));
    }
    let input = GraphInput::with_edges(graph, &split.train_pos);
    let mut model = GaeModel::new(graph.features().ncols(), *hyper);

    let held_out: std::collections::HashSet<(usize, usize)> =
        split.val_neg.iter().chain(&split.test_neg).copied().collect();
    let all_neg = graph.non_edges();
    let mut pool: Vec<(usize, usize)> = all_neg.iter().copied().filter(|p| !held_out.contains(p)).collect();
    if pool.is_empty() {
        pool = all_neg;
    }
    if pool.is_empty() {
        return Err(Error::Degenerate("no negatives available: graph is complete".into()));
    }
    let mut rng = rng_from(hyper.seed, tags::NEG_SAMPLING);
    let n_neg = split.train_pos.len() * hyper.neg_ratio;
    let mut batch: Vec<LabelledPair> = Vec::with_capacity(split.train_pos.len() + n_neg);

    let mut rows = Vec::new();
    let val_labels: Vec<bool> = split
        .val_pos
        .iter()
        .map(|_| true)
        .chain(split.val_neg.iter().map(|_| false))
        .collect();
    // epoch, validation AUROC, validation loss, weights
    type Best = (usize, f64, f64, Array2<f64>, Array2<f64>);
    let mut best: Option<Best> = None;
    let mut wait = 0usize;
    for epoch in 0..=hyper.max_epochs {
        let forward = model.forward(&input)?;
        let val = pair_auroc(&forward.z, &split.val_pos, &split.val_neg).unwrap_or(f64::NAN);
        let val_probs: Vec<f64> = split
            .val_pos
            .iter()
            .chain(&split.val_neg)
            .map(|&(u, v)| decode_edge(forward.z.row(u), forward.z.row(v)))
            .collect();
        let val_loss = bce_loss(&val_labels, &val_probs);

        batch.clear();
        batch.extend(split.train_pos.iter().map(|&(u, v)| LabelledPair { u, v, label: true }));
        for _ in 0..n_neg {
            let (u, v) = pool[rng.random_range(0..pool.len())];
            batch.push(LabelledPair { u, v, label: false });
        }
        let loss = GaeModel::batch_loss(&forward, &batch);
        rows.push(TraceRow {
            epoch,
            loss,
            val_auroc: val,
            val_loss,
        });
        if !loss.is_finite() || forward.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                message: format!("loss {loss}"),
            });
        }

        // AUROC saturates early on clean graphs; validation loss breaks the tie
        let improved = best
            .as_ref()
            .is_none_or(|b| val > b.1 || (val == b.1 && val_loss < b.2));
        if improved {
            best = Some((epoch, val, val_loss, model.w0.clone(), model.w1.clone()));
            wait = 0;
        } else {
            wait += 1;
            if wait > hyper.patience {
                debug!("early stop at epoch {epoch}");
                break;
            }
        }
        if epoch == hyper.max_epochs {
            break;
        }
        let grads = model.backward(&input, &forward, &batch);
        model.adam_step(&grads).map_err(|e| Error::Diverged {
            epoch,
            message: e.to_string(),
        })?;
    }
    let (best_epoch, best_val, _, w0, w1) = best.expect("at least one epoch runs");
    model.w0 = w0;
    model.w1 = w1;
    Ok((
        model,
        TrainingTrace {
            rows,
            best_epoch,
            best_val_auroc: best_val,
        },
    ))
}
