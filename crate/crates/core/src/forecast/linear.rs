use ndarray::{concatenate, s, Array2, Axis};

use super::{check_training_rows, FittedParams, ForecastResult, HarDataset, ModelKind};
use crate::error::{Error, Result};
use crate::linalg::lstsq;

fn with_intercept(x: &Array2<f64>) -> Array2<f64> {
    concatenate![Axis(1), Array2::ones((x.nrows(), 1)), *x]
}

/// Ordinary least squares with intercept on the training rows. Regressors
/// that are constant over the training rows get a zero coefficient, so they
/// cannot change predictions through rounding. Any remaining rank deficiency
/// falls back to ridge with `ridge_lambda`, flagged in the result.
pub fn fit_linear(data: &HarDataset, with_auroc: bool, ridge_lambda: f64) -> Result<ForecastResult> {
    let names = data.regressor_names(with_auroc);
    check_training_rows(data, names.len() + 2)?;
    let design = data.design(with_auroc)?;
    let y = data.targets();
    let split = data.split_index;
    let train = design.slice(s![..split, ..]);
    let varying: Vec<usize> = (0..names.len())
        .filter(|&j| train.column(j).iter().any(|&v| v != train[[0, j]]))
        .collect();
    let x = with_intercept(&design.select(Axis(1), &varying));
    let sol = lstsq(x.slice(s![..split, ..]), &y.slice(s![..split]).to_owned(), ridge_lambda)
        .ok_or_else(|| Error::Degenerate("least-squares system could not be solved".into()))?;
    let predictions = x.slice(s![split.., ..]).dot(&sol.coef).to_vec();
    let mut coef = vec![0.0; names.len()];
    for (&j, c) in varying.iter().zip(sol.coef.iter().skip(1)) {
        coef[j] = *c;
    }
    let fitted = FittedParams::Linear {
        intercept: sol.coef[0],
        coefficients: names.iter().zip(coef).map(|(n, c)| (n.to_string(), c)).collect(),
        ridge_fallback: sol.ridge,
    };
    Ok(ForecastResult::new(data, ModelKind::Linear, with_auroc, predictions, fitted))
}
