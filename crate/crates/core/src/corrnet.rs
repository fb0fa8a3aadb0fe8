//! Rolling correlation matrices, threshold graphs and GCN inputs.

use std::io::{Read, Write};

use chrono::NaiveDate;
use log::debug;
use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ReturnMatrix;
use crate::linalg::Csr;

/// Sampling frequency of the returns fed into the correlation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrFrequency {
    /// Native bar frequency of the return matrix.
    #[default]
    Bar,
    /// Non-overlapping sums of `k` bars inside each session.
    Bars(usize),
    /// One summed return per session.
    Daily,
}

impl std::str::FromStr for CorrFrequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bar" => Ok(Self::Bar),
            "daily" => Ok(Self::Daily),
            other => other
                .strip_suffix("bars")
                .and_then(|k| k.trim().parse::<usize>().ok())
                .filter(|&k| k > 0)
                .map(Self::Bars)
                .ok_or_else(|| Error::Config(format!("corr_frequency must be bar, daily or <k>bars, got {other:?}"))),
        }
    }
}

/// Node features derived from the window's returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpec {
    /// One summed log return per session, `F = S`.
    #[default]
    DailyReturns,
    /// Every bar return in the window.
    RawReturns,
}

impl std::str::FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "daily_returns" => Ok(Self::DailyReturns),
            "raw_returns" => Ok(Self::RawReturns),
            other => Err(Error::Config(format!(
                "feature_spec must be daily_returns or raw_returns, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub tickers: Vec<String>,
    pub window_end: NaiveDate,
    pub window_len: usize,
    pub values: Array2<f64>,
    /// Tickers with zero return variance in the window.
    pub zero_variance: Vec<usize>,
}

/// Pearson correlation of the rows of `x` (`N × M`), two-pass.
/// Rows with zero variance get zero off-diagonal entries and are reported.
pub fn pearson_rows(x: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<usize>) {
    let n = x.nrows();
    let m = x.ncols() as f64;
    let mut centered = x.to_owned();
    let mut floors = Vec::with_capacity(n);
    for mut row in centered.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / m;
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        row.mapv_inplace(|v| v - mean);
        floors.push(m * (16.0 * f64::EPSILON * scale).powi(2));
    }
    let gram = centered.dot(&centered.t());
    let zero: Vec<usize> = (0..n).filter(|&i| !(gram[[i, i]] > floors[i])).collect();
    let sd: Vec<f64> = (0..n).map(|i| gram[[i, i]].sqrt()).collect();
    let mut corr = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        corr[[i, i]] = 1.0;
        if zero.contains(&i) {
            continue;
        }
        for j in 0..i {
            if zero.contains(&j) {
                continue;
            }
            let v = (0.5 * (gram[[i, j]] + gram[[j, i]]) / (sd[i] * sd[j])).clamp(-1.0, 1.0);
            corr[[i, j]] = v;
            corr[[j, i]] = v;
        }
    }
    (corr, zero)
}

/// Column ranges and daily sums of a return matrix, computed once per sequence.
struct SessionIndex {
    days: Vec<NaiveDate>,
    ranges: Vec<std::ops::Range<usize>>,
    daily: Array2<f64>,
}

impl SessionIndex {
    fn new(returns: &ReturnMatrix) -> Self {
        let (days, ranges): (Vec<_>, Vec<_>) = returns.sessions().into_iter().unzip();
        let (_, daily) = returns.daily_returns();
        Self { days, ranges, daily }
    }

    fn position(&self, day: NaiveDate) -> Result<usize> {
        self.days
            .binary_search(&day)
            .map_err(|_| Error::Validation(format!("{day} is not a trading session of the return matrix")))
    }

    /// Sessions `[end + 1 − s, end]`.
    fn window(&self, end: usize, s: usize) -> Result<std::ops::Range<usize>> {
        if s == 0 || end + 1 < s {
            return Err(Error::Degenerate(format!(
                "window of {s} sessions ending at session {end} starts before the data"
            )));
        }
        Ok(end + 1 - s..end + 1)
    }

    fn observations(&self, returns: &ReturnMatrix, sessions: std::ops::Range<usize>, freq: CorrFrequency) -> Array2<f64> {
        let r = returns.returns();
        match freq {
            CorrFrequency::Daily => self.daily.slice(s![.., sessions]).to_owned(),
            CorrFrequency::Bar => {
                let start = self.ranges[sessions.start].start;
                let end = self.ranges[sessions.end - 1].end;
                r.slice(s![.., start..end]).to_owned()
            }
            CorrFrequency::Bars(k) => {
                let mut cols: Vec<std::ops::Range<usize>> = Vec::new();
                for range in &self.ranges[sessions] {
                    let mut t = range.start;
                    while t + k <= range.end {
                        cols.push(t..t + k);
                        t += k;
                    }
                }
                let mut out = Array2::<f64>::zeros((r.nrows(), cols.len()));
                for (j, c) in cols.iter().enumerate() {
                    out.column_mut(j).assign(&r.slice(s![.., c.clone()]).sum_axis(Axis(1)));
                }
                out
            }
        }
    }

    fn features(&self, returns: &ReturnMatrix, sessions: std::ops::Range<usize>, spec: FeatureSpec) -> Array2<f64> {
        let mut x = match spec {
            FeatureSpec::DailyReturns => self.daily.slice(s![.., sessions]).to_owned(),
            FeatureSpec::RawReturns => self.observations(returns, sessions, CorrFrequency::Bar),
        };
        zscore_columns(&mut x);
        x
    }
}

/// Standardizes each column across rows; constant columns become zero.
pub fn zscore_columns(x: &mut Array2<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            col.mapv_inplace(|v| (v - mean) / sd);
        } else {
            col.fill(0.0);
        }
    }
}

/// Pearson correlation over the `window_len` sessions ending at `window_end`.
pub fn rolling_correlation(
    returns: &ReturnMatrix,
    window_len: usize,
    window_end: NaiveDate,
    freq: CorrFrequency,
) -> Result<CorrelationMatrix> {
    let index = SessionIndex::new(returns);
    let end = index.position(window_end)?;
    correlation_at(returns, &index, end, window_len, freq)
}

fn correlation_at(
    returns: &ReturnMatrix,
    index: &SessionIndex,
    end: usize,
    window_len: usize,
    freq: CorrFrequency,
) -> Result<CorrelationMatrix> {
    let sessions = index.window(end, window_len)?;
    let obs = index.observations(returns, sessions, freq);
    if obs.ncols() < 2 {
        return Err(Error::Degenerate(format!(
            "window ending {} holds {} observations per ticker, need at least 2",
            index.days[end],
            obs.ncols()
        )));
    }
    let (values, zero_variance) = pearson_rows(obs.view());
    if !zero_variance.is_empty() {
        debug!("{}: {} zero-variance tickers", index.days[end], zero_variance.len());
    }
    Ok(CorrelationMatrix {
        tickers: returns.tickers().to_vec(),
        window_end: index.days[end],
        window_len,
        values,
        zero_variance,
    })
}

/// Thresholded correlation network with GCN inputs for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketGraph {
    tickers: Vec<String>,
    window_end: NaiveDate,
    window_len: usize,
    threshold: f64,
    adjacency: Array2<bool>,
    norm_adjacency: Csr,
    features: Array2<f64>,
    edges: Vec<(usize, usize)>,
    zero_variance: Vec<usize>,
}

/// `D̂^{-1/2}(A+I)D̂^{-1/2}` with `D̂` the degree of `A+I`.
pub fn normalized_adjacency(adjacency: &Array2<bool>) -> Csr {
    let n = adjacency.nrows();
    let inv_sqrt: Vec<f64> = adjacency
        .rows()
        .into_iter()
        .map(|row| (1.0 + row.iter().filter(|&&a| a).count() as f64).sqrt().recip())
        .collect();
    let mut dense = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j || adjacency[[i, j]] {
                dense[[i, j]] = inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    Csr::from_dense(dense.view())
}

impl MarketGraph {
    /// Assembles a graph from a symmetric boolean adjacency and node features.
    pub fn new(
        tickers: Vec<String>,
        window_end: NaiveDate,
        window_len: usize,
        threshold: f64,
        adjacency: Array2<bool>,
        features: Array2<f64>,
    ) -> Result<Self> {
        let n = tickers.len();
        if adjacency.dim() != (n, n) || features.nrows() != n {
            return Err(Error::Validation(format!(
                "graph with {n} tickers got adjacency {:?} and features {:?}",
                adjacency.dim(),
                features.dim()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("node features".into()));
        }
        let mut edges = Vec::new();
        for u in 0..n {
            if adjacency[[u, u]] {
                return Err(Error::Validation(format!("self-loop stored at node {u}")));
            }
            for v in u + 1..n {
                if adjacency[[u, v]] != adjacency[[v, u]] {
                    return Err(Error::Validation(format!("adjacency not symmetric at ({u}, {v})")));
                }
                if adjacency[[u, v]] {
                    edges.push((u, v));
                }
            }
        }
        let norm_adjacency = normalized_adjacency(&adjacency);
        Ok(Self {
            tickers,
            window_end,
            window_len,
            threshold,
            adjacency,
            norm_adjacency,
            features,
            edges,
            zero_variance: Vec::new(),
        })
    }

    /// Builds a graph on nodes `0..n` from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], features: Array2<f64>) -> Result<Self> {
        let mut adjacency = Array2::from_elem((n, n), false);
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(Error::Validation(format!("invalid edge ({u}, {v}) for {n} nodes")));
            }
            adjacency[[u, v]] = true;
            adjacency[[v, u]] = true;
        }
        Self::new(
            (0..n).map(|i| format!("n{i}")).collect(),
            NaiveDate::MIN,
            0,
            f64::NAN,
            adjacency,
            features,
        )
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn window_end(&self) -> NaiveDate {
        self.window_end
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn n_nodes(&self) -> usize {
        self.tickers.len()
    }

    pub fn adjacency(&self) -> &Array2<bool> {
        &self.adjacency
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[[u, v]]
    }

    pub fn norm_adjacency(&self) -> &Csr {
        &self.norm_adjacency
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Undirected edges with `u < v`, in row-major order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Node pairs `u < v` that are not edges.
    pub fn non_edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes();
        let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2 - self.edges.len());
        for u in 0..n {
            for v in u + 1..n {
                if !self.adjacency[[u, v]] {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// True when the graph has no edges; GAE training refuses such graphs.
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn zero_variance(&self) -> &[usize] {
        &self.zero_variance
    }

    pub fn header(&self) -> GraphHeader {
        GraphHeader {
            window_end: self.window_end,
            window_len: self.window_len,
            threshold: self.threshold,
            n_nodes: self.n_nodes(),
            n_edges: self.n_edges(),
            n_features: self.features.ncols(),
            zero_variance: self.zero_variance.clone(),
        }
    }

    /// Edge list as `u,v` rows.
    pub fn write_edges_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["u", "v"])?;
        for &(u, v) in &self.edges {
            w.write_record([u.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Features as `ticker,f1..fF` rows.
    pub fn write_features_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["ticker".to_string()];
        header.extend((1..=self.features.ncols()).map(|f| format!("f{f}")));
        w.write_record(&header)?;
        for (ticker, row) in self.tickers.iter().zip(self.features.rows()) {
            let mut rec = vec![ticker.clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a graph from its serialized header, edge list and features.
    /// Lines starting with `#` are ignored in both CSVs.
    pub fn read(header: &GraphHeader, edges: impl Read, features: impl Read) -> Result<Self> {
        let mut er = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(edges);
        let mut edge_list = Vec::new();
        for rec in er.deserialize::<(usize, usize)>() {
            edge_list.push(rec?);
        }
        let mut fr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(features);
        let mut tickers = Vec::new();
        let mut values = Vec::new();
        for rec in fr.records() {
            let rec = rec?;
            tickers.push(rec[0].to_string());
            for cell in rec.iter().skip(1) {
                values.push(
                    cell.parse::<f64>()
                        .map_err(|e| Error::Validation(format!("bad feature value {cell:?}: {e}")))?,
                );
            }
        }
        let n = tickers.len();
        if n != header.n_nodes || edge_list.len() != header.n_edges {
            return Err(Error::Validation("graph files disagree with header".into()));
        }
        let features = Array2::from_shape_vec((n, header.n_features), values)
            .map_err(|e| Error::Validation(format!("feature matrix shape: {e}")))?;
        let mut adjacency = Array2::from_elem((n, n), false);
        for &(u, v) in &edge_list {
            if u >= n || v >= n || u == v {
                return Err(Error::Validation(format!("invalid edge ({u}, {v})")));
            }
            adjacency[[u, v]] = true;
            adjacency[[v, u]] = true;
        }
        let mut g = Self::new(
            tickers,
            header.window_end,
            header.window_len,
            header.threshold,
            adjacency,
            features,
        )?;
        g.zero_variance = header.zero_variance.clone();
        Ok(g)
    }
}

/// Serialized summary of a [`MarketGraph`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphHeader {
    pub window_end: NaiveDate,
    pub window_len: usize,
    pub threshold: f64,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_features: usize,
    pub zero_variance: Vec<usize>,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("corr_threshold must lie in (0, 1), got {threshold}")))
    }
}

/// Edge `u–v` iff `corr[u][v] > threshold`; features built over the same window.
pub fn threshold_graph(
    corr: &CorrelationMatrix,
    threshold: f64,
    features: FeatureSpec,
    returns: &ReturnMatrix,
) -> Result<MarketGraph> {
    check_threshold(threshold)?;
    let index = SessionIndex::new(returns);
    let end = index.position(corr.window_end)?;
    let sessions = index.window(end, corr.window_len)?;
    let x = index.features(returns, sessions, features);
    graph_from(corr, threshold, x)
}

fn graph_from(corr: &CorrelationMatrix, threshold: f64, features: Array2<f64>) -> Result<MarketGraph> {
    let n = corr.tickers.len();
    let adjacency = Array2::from_shape_fn((n, n), |(u, v)| u != v && corr.values[[u, v]] > threshold);
    let mut g = MarketGraph::new(
        corr.tickers.clone(),
        corr.window_end,
        corr.window_len,
        threshold,
        adjacency,
        features,
    )?;
    g.zero_variance = corr.zero_variance.clone();
    if g.is_empty() {
        debug!("graph ending {} has no edges", g.window_end);
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub window_len: usize,
    pub threshold: f64,
    pub corr_frequency: CorrFrequency,
    pub feature_spec: FeatureSpec,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            window_len: 20,
            threshold: 0.7,
            corr_frequency: CorrFrequency::Bar,
            feature_spec: FeatureSpec::DailyReturns,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        check_threshold(self.threshold)?;
        if self.window_len < 1 {
            return Err(Error::Config("window_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// One graph per session from session `S` onward, advancing one session at a time.
pub fn graph_sequence(returns: &ReturnMatrix, cfg: &GraphConfig) -> Result<Vec<MarketGraph>> {
    cfg.validate()?;
    let index = SessionIndex::new(returns);
    let s = cfg.window_len;
    if index.days.len() < s + 2 {
        return Err(Error::Degenerate(format!(
            "{} trading sessions, need at least window_len + 2 = {}",
            index.days.len(),
            s + 2
        )));
    }
    (s - 1..index.days.len())
        .into_par_iter()
        .map(|end| {
            let corr = correlation_at(returns, &index, end, s, cfg.corr_frequency)?;
            let x = index.features(returns, index.window(end, s)?, cfg.feature_spec);
            graph_from(&corr, cfg.threshold, x)
        })
        .collect()
}

/// Fraction of `a`'s edges that are also edges of `b`.
pub fn edge_overlap(a: &MarketGraph, b: &MarketGraph) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let shared = a.edges().iter().filter(|&&(u, v)| b.has_edge(u, v)).count();
    shared as f64 / a.n_edges() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{NaiveDateTime, TimeDelta};
    use ndarray::array;

    fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn pearson_examples() {
        let (c, _) = pearson_rows(array![[1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 5.0]].view());
        assert!((c[[0, 1]] - 0.9827).abs() < 5e-5);
        assert!((c[[0, 1]] - naive_pearson(&[1., 2., 3., 4.], &[1., 2., 3., 5.])).abs() < 1e-12);

        let (c, _) = pearson_rows(array![[0.1, -0.3, 0.2], [0.1, -0.3, 0.2], [-0.1, 0.3, -0.2]].view());
        assert_eq!(c[[0, 1]], 1.0);
        assert_eq!(c[[0, 2]], -1.0);
    }

    #[test]
    fn zero_variance_row_is_isolated() {
        let (c, zero) = pearson_rows(array![[0.0, 0.0, 0.0], [1.0, 2.0, 4.0], [0.5, 0.5, 0.5]].view());
        assert_eq!(zero, vec![0, 2]);
        assert_eq!(c[[0, 1]], 0.0);
        assert_eq!(c[[0, 0]], 1.0);
        assert_eq!(c[[1, 2]], 0.0);
    }

    fn corr_of(values: Array2<f64>) -> CorrelationMatrix {
        let n = values.nrows();
        CorrelationMatrix {
            tickers: (0..n).map(|i| format!("T{i}")).collect(),
            window_end: NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
            window_len: 1,
            values,
            zero_variance: vec![],
        }
    }

    #[test]
    fn threshold_is_strict() {
        let corr = corr_of(array![[1.0, 0.7], [0.7, 1.0]]);
        let g = graph_from(&corr, 0.7, Array2::zeros((2, 1))).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn triangle_from_uniform_correlation() {
        let corr = corr_of(Array2::from_shape_fn((3, 3), |(i, j)| if i == j { 1.0 } else { 0.9 }));
        let g = graph_from(&corr, 0.7, Array2::zeros((3, 1))).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn path_graph_normalization() {
        let g = MarketGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)], Array2::zeros((4, 1))).unwrap();
        let a = g.norm_adjacency().to_dense();
        assert!((a[[0, 0]] - 0.5).abs() < 1e-15);
        assert!((a[[0, 1]] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a[[1, 1]] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a[[0, 2]], 0.0);
    }

    #[test]
    fn adjacency_must_be_symmetric() {
        let mut adj = Array2::from_elem((2, 2), false);
        adj[[0, 1]] = true;
        let err = MarketGraph::new(
            vec!["a".into(), "b".into()],
            NaiveDate::MIN,
            1,
            0.5,
            adj,
            Array2::zeros((2, 1)),
        );
        assert!(err.is_err());
    }

    fn synthetic_returns(days: usize, bars: usize) -> ReturnMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let day0 = NaiveDate::from_ymd_opt(2021, 1, 4).unwrap();
        let mut stamps: Vec<NaiveDateTime> = Vec::new();
        for d in 0..days {
            let open = (day0 + TimeDelta::days(d as i64)).and_hms_opt(9, 31, 0).unwrap();
            stamps.extend((0..bars).map(|b| open + TimeDelta::minutes(b as i64)));
        }
        let r = Array2::from_shape_fn((4, days * bars), |(n, _)| rng.random_range(-1.0..1.0) * (n + 1) as f64 * 1e-3);
        ReturnMatrix::new(
            (0..4).map(|i| format!("T{i}")).collect(),
            stamps,
            r,
            TimeDelta::minutes(1),
        )
        .unwrap()
    }

    #[test]
    fn sequence_count_and_precondition() {
        let r = synthetic_returns(22, 5);
        let graphs = graph_sequence(&r, &GraphConfig::default()).unwrap();
        assert_eq!(graphs.len(), 3);
        assert_eq!(graphs[0].features().ncols(), 20);
        let short = synthetic_returns(21, 5);
        assert!(matches!(
            graph_sequence(&short, &GraphConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn rolling_window_uses_trailing_sessions() {
        let r = synthetic_returns(5, 4);
        let end = r.sessions()[3].0;
        let corr = rolling_correlation(&r, 2, end, CorrFrequency::Bar).unwrap();
        let window = r.returns().slice(s![.., 8..16]).to_owned();
        let x: Vec<f64> = window.row(0).to_vec();
        let y: Vec<f64> = window.row(2).to_vec();
        assert!((corr.values[[0, 2]] - naive_pearson(&x, &y)).abs() < 1e-12);

        let daily = rolling_correlation(&r, 3, end, CorrFrequency::Daily).unwrap();
        let (_, d) = r.daily_returns();
        let x: Vec<f64> = d.slice(s![1, 1..4]).to_vec();
        let y: Vec<f64> = d.slice(s![3, 1..4]).to_vec();
        assert!((daily.values[[1, 3]] - naive_pearson(&x, &y)).abs() < 1e-12);

        let pairs = rolling_correlation(&r, 2, end, CorrFrequency::Bars(2)).unwrap();
        assert!(pairs.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn features_are_column_zscored() {
        let r = synthetic_returns(22, 5);
        let g = &graph_sequence(&r, &GraphConfig::default()).unwrap()[0];
        for col in g.features().columns() {
            let mean = col.sum() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_serialization_round_trip() {
        let r = synthetic_returns(22, 5);
        let cfg = GraphConfig {
            threshold: 0.01,
            ..GraphConfig::default()
        };
        let g = graph_sequence(&r, &cfg).unwrap().remove(1);
        let mut edges = Vec::new();
        let mut feats = Vec::new();
        g.write_edges_csv(&mut edges).unwrap();
        g.write_features_csv(&mut feats).unwrap();
        let back = MarketGraph::read(&g.header(), edges.as_slice(), feats.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn frequency_parsing() {
        assert_eq!("bar".parse::<CorrFrequency>().unwrap(), CorrFrequency::Bar);
        assert_eq!("5bars".parse::<CorrFrequency>().unwrap(), CorrFrequency::Bars(5));
        assert!("0bars".parse::<CorrFrequency>().is_err());
        assert!("weekly".parse::<CorrFrequency>().is_err());
    }
}
