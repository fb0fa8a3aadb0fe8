//! Gradient-boosted regression trees with squared-error loss.

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{check_training_rows, FittedParams, ForecastResult, HarDataset, ModelKind};
use crate::error::{Error, Result};
use crate::rng::{rng_from, tags};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeHyper {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    pub min_samples_leaf: usize,
    /// Fraction of training rows drawn without replacement for each round.
    pub subsample: f64,
}

impl Default for TreeHyper {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 3,
            shrinkage: 0.1,
            min_samples_leaf: 1,
            subsample: 1.0,
        }
    }
}

impl TreeHyper {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config("max_depth and min_samples_leaf must be positive".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config(format!("shrinkage must lie in (0, 1], got {}", self.shrinkage)));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!("subsample must lie in (0, 1], got {}", self.subsample)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    r: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let at = self.nodes.len();
        let mean = idx.iter().map(|&i| self.r[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return at;
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return at;
        };
        let mid = partition(idx, |i| self.x[[i, feature]] <= threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }

    /// Exact greedy search; the first strictly best split wins ties.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.r[i]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x.ncols() {
            order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
            let mut left = 0.0;
            for k in 0..n - 1 {
                left += self.r[order[k]];
                let (nl, nr) = (k + 1, n - k - 1);
                let (lo, hi) = (self.x[[order[k], f]], self.x[[order[k + 1], f]]);
                if nl < self.min_leaf || nr < self.min_leaf || lo == hi {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - base;
                if gain > 1e-12 * (1.0 + base.abs()) && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, lo + (hi - lo) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut mid = 0;
    for k in 0..idx.len() {
        if pred(idx[k]) {
            idx.swap(mid, k);
            mid += 1;
        }
    }
    mid
}

/// Fitted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBoostedTrees {
    base_score: f64,
    shrinkage: f64,
    trees: Vec<Tree>,
}

impl GradientBoostedTrees {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[f64], hyper: &TreeHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let n = y.len();
        if n == 0 || x.nrows() != n {
            return Err(Error::Validation(format!("{} rows of regressors for {n} targets", x.nrows())));
        }
        let base_score = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base_score; n];
        let mut rng = rng_from(seed, tags::TREE_SUBSAMPLE);
        let take = ((hyper.subsample * n as f64).round() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(hyper.n_rounds);
        for _ in 0..hyper.n_rounds {
            let residual: Vec<f64> = y.iter().zip(&pred).map(|(y, p)| y - p).collect();
            let mut idx: Vec<usize> = if take == n {
                (0..n).collect()
            } else {
                let mut v = sample(&mut rng, n, take).into_vec();
                v.sort_unstable();
                v
            };
            let mut g = Grower {
                x,
                r: &residual,
                max_depth: hyper.max_depth,
                min_leaf: hyper.min_samples_leaf,
                nodes: Vec::new(),
            };
            g.grow(&mut idx, 0);
            let tree = Tree { nodes: g.nodes };
            for (i, p) in pred.iter_mut().enumerate() {
                *p += hyper.shrinkage * tree.predict(x.row(i));
            }
            trees.push(tree);
        }
        Ok(Self {
            base_score,
            shrinkage: hyper.shrinkage,
            trees,
        })
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| self.base_score + self.shrinkage * self.trees.iter().map(|t| t.predict(row)).sum::<f64>())
            .collect()
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    fn leaves(&self) -> usize {
        self.trees.iter().map(Tree::leaves).sum()
    }
}

pub fn fit_tree(data: &HarDataset, with_auroc: bool, hyper: &TreeHyper, seed: u64) -> Result<ForecastResult> {
    check_training_rows(data, 20)?;
    let x: Array2<f64> = data.design(with_auroc)?;
    let y = data.targets();
    let split = data.split_index;
    let model = GradientBoostedTrees::fit(x.slice(s![..split, ..]), &y.as_slice().expect("contiguous")[..split], hyper, seed)?;
    let predictions = model.predict(x.slice(s![split.., ..]));
    let fitted = FittedParams::Tree {
        rounds: model.rounds(),
        base_score: model.base_score(),
        leaves: model.leaves(),
    };
    Ok(ForecastResult::new(data, ModelKind::Tree, with_auroc, predictions, fitted))
}
