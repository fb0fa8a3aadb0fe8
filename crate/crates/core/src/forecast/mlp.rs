//! One-hidden-layer ReLU regression network trained with Adam.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_training_rows, FittedParams, ForecastResult, HarDataset, ModelKind};
use crate::error::{Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{rng_from, tags};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpHyper {
    pub hidden: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Tail share of the training rows held out for early stopping.
    pub val_fraction: f64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 0.01,
            max_epochs: 1000,
            patience: 50,
            val_fraction: 0.2,
        }
    }
}

impl MlpHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.max_epochs == 0 {
            return Err(Error::Config("hidden and max_epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {}", self.val_fraction)));
        }
        Ok(())
    }
}

/// `ŷ = relu(x·W1 + b1)·W2 + b2`
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

impl Mlp {
    /// He-scaled first layer, Glorot-scaled output layer, zero biases.
    pub fn new(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed, tags::MLP_INIT);
        let mut draw = |rows: usize, cols: usize, sd: f64| {
            Array2::from_shape_simple_fn((rows, cols), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
        };
        let w1 = draw(inputs, hidden, (2.0 / inputs.max(1) as f64).sqrt());
        let w2 = draw(hidden, 1, (2.0 / (hidden + 1) as f64).sqrt());
        Self {
            w1,
            b1: Array2::zeros((1, hidden)),
            w2,
            b2: Array2::zeros((1, 1)),
        }
    }

    fn pre_activation(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.w1) + &self.b1
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let h = self.pre_activation(x).mapv(|v| v.max(0.0));
        (h.dot(&self.w2) + &self.b2).column(0).to_owned()
    }

    /// Mean squared error.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: &Array1<f64>) -> f64 {
        let p = self.predict(x);
        (&p - y).mapv(|e| e * e).mean().unwrap_or(0.0)
    }

    pub fn gradients(&self, x: ArrayView2<'_, f64>, y: &Array1<f64>) -> MlpGradients {
        let n = y.len() as f64;
        let a = self.pre_activation(x);
        let h = a.mapv(|v| v.max(0.0));
        let p = (h.dot(&self.w2) + &self.b2).column(0).to_owned();
        let d_out = ((&p - y) * (2.0 / n)).insert_axis(Axis(1));
        let w2 = h.t().dot(&d_out);
        let b2 = d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_a = d_out.dot(&self.w2.t());
        d_a.zip_mut_with(&a, |g, &pre| {
            if pre <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = x.t().dot(&d_a);
        let b1 = d_a.sum_axis(Axis(0)).insert_axis(Axis(0));
        MlpGradients { w1, b1, w2, b2 }
    }
}

/// Column means and standard deviations; constant columns keep unit scale.
fn column_stats(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let sd = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    (mean, sd)
}

#[derive(Debug, Clone)]
struct Trained {
    net: Mlp,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
}

fn train(x: ArrayView2<'_, f64>, y: &Array1<f64>, hyper: &MlpHyper, seed: u64) -> Result<Trained> {
    let n = y.len();
    let n_val = ((n as f64 * hyper.val_fraction).round() as usize).clamp(1, n - 1);
    let cut = n - n_val;
    let (xt, xv) = (x.slice(s![..cut, ..]), x.slice(s![cut.., ..]));
    let (yt, yv) = (y.slice(s![..cut]).to_owned(), y.slice(s![cut..]).to_owned());

    let mut net = Mlp::new(x.ncols(), hyper.hidden, seed);
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: hyper.learning_rate,
            ..AdamConfig::default()
        },
        &[net.w1.dim(), net.b1.dim(), net.w2.dim(), net.b2.dim()],
    );
    let mut best = (net.clone(), 0, net.loss(xv, &yv));
    let mut wait = 0;
    let mut epochs_run = 0;
    for epoch in 1..=hyper.max_epochs {
        let g = net.gradients(xt, &yt);
        adam.step(
            &mut [&mut net.w1, &mut net.b1, &mut net.w2, &mut net.b2],
            &[&g.w1, &g.b1, &g.w2, &g.b2],
        )
        .map_err(|e| Error::Diverged {
            epoch,
            message: e.to_string(),
        })?;
        epochs_run = epoch;
        let val = net.loss(xv, &yv);
        if !val.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("validation loss {val}"),
            });
        }
        if val < best.2 {
            best = (net.clone(), epoch, val);
            wait = 0;
        } else {
            wait += 1;
            if wait > hyper.patience {
                break;
            }
        }
    }
    Ok(Trained {
        net: best.0,
        epochs_run,
        best_epoch: best.1,
        best_val_loss: best.2,
    })
}

/// Regressors and target are standardized with training-row statistics; the
/// network fits the standardized target and predictions are mapped back.
pub fn fit_mlp(data: &HarDataset, with_auroc: bool, hyper: &MlpHyper, seed: u64) -> Result<ForecastResult> {
    hyper.validate()?;
    check_training_rows(data, 20)?;
    let x = data.design(with_auroc)?;
    let y = data.targets();
    let split = data.split_index;
    let (mu, sd) = column_stats(x.slice(s![..split, ..]));
    let z = (&x - &mu) / &sd;
    let y_train = y.slice(s![..split]);
    let y_mean = y_train.mean().expect("non-empty");
    let y_sd = y_train.std(0.0);

    let (predictions, fitted) = if y_sd > 0.0 {
        let ys = y_train.mapv(|v| (v - y_mean) / y_sd);
        let t = train(z.slice(s![..split, ..]), &ys, hyper, seed)?;
        let p = t.net.predict(z.slice(s![split.., ..])).mapv(|v| y_mean + y_sd * v);
        let fitted = FittedParams::Mlp {
            hidden: hyper.hidden,
            epochs_run: t.epochs_run,
            best_epoch: t.best_epoch,
            best_val_loss: t.best_val_loss,
        };
        (p.to_vec(), fitted)
    } else {
        // a constant target is fit exactly by zero output weights
        let fitted = FittedParams::Mlp {
            hidden: hyper.hidden,
            epochs_run: 0,
            best_epoch: 0,
            best_val_loss: 0.0,
        };
        (vec![y_mean; data.n_oos()], fitted)
    };
    Ok(ForecastResult::new(data, ModelKind::Mlp, with_auroc, predictions, fitted))
}
