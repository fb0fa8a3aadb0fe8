//! AUROC, rank correlation, R² and kernel density estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("NaN score".into()));
        }
        Ok(Self { scores, labels })
    }

    /// Positives first, then negatives.
    pub fn from_pos_neg(pos: &[f64], neg: &[f64]) -> Result<Self> {
        let mut scores = pos.to_vec();
        scores.extend_from_slice(neg);
        let mut labels = vec![true; pos.len()];
        labels.resize(pos.len() + neg.len(), false);
        Self::new(scores, labels)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Probability a random positive outscores a random negative, ties counted
/// one half. `None` when either class is empty.
pub fn auroc(data: &ScoredLabels) -> Option<f64> {
    let n_pos = data.labels.iter().filter(|&&l| l).count();
    let n_neg = data.labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = mid_ranks(&data.scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(&data.labels)
        .filter_map(|(r, &l)| l.then_some(*r))
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Plain Pearson coefficient; `None` for fewer than two points or a constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation on mid-ranks. Pairs with a non-finite member are
/// dropped first. `None` for fewer than three pairs or a constant series.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .unzip();
    if xs.len() < 3 {
        return None;
    }
    pearson(&mid_ranks(&xs), &mid_ranks(&ys))
}

/// `1 − SSE/SST` around the mean of `actual`; `None` when `actual` is constant.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Option<f64> {
    if actual.len() != predicted.len() || actual.len() < 2 || actual.iter().all(|&a| a == actual[0]) {
        return None;
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if sst <= 0.0 {
        return None;
    }
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    Some(1.0 - sse / sst)
}

pub fn mean_squared_error(actual: &[f64], predicted: &[f64]) -> f64 {
    actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / actual.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
}

impl KdeCurve {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.x, &self.density)
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9·min(sd, IQR/1.34)·n^{-1/5}`, falling back to whichever
/// spread is positive, then to a small scale-relative width for a point mass.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return 1e-3 * mean.abs().max(1.0),
    };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian KDE on `grid_points` evenly spaced points spanning the samples
/// plus four bandwidths on each side.
pub fn kde(samples: &[f64], bandwidth: Bandwidth, grid_points: usize) -> Result<KdeCurve> {
    let samples: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if samples.len() < 2 {
        return Err(Error::Degenerate("kde needs at least two finite samples".into()));
    }
    if grid_points < 2 {
        return Err(Error::Config("kde grid needs at least two points".into()));
    }
    let h = match bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(&samples),
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::Config(format!("bandwidth must be positive, got {h}"))),
    };
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let x: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
    let density = x
        .iter()
        .map(|&g| {
            norm * samples
                .iter()
                .map(|&s| (-0.5 * ((g - s) / h).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    Ok(KdeCurve { bandwidth: h, x, density })
}
