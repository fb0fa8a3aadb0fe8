//! Adam optimizer shared by the graph auto-encoder and the MLP back-end.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a fixed list of parameter matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Array2<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Array2<f64>] {
        &self.v
    }

    /// One bias-corrected update. Parameters are untouched when any gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[&Array2<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Validation(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.dim() != self.m[i].dim() || params[i].dim() != self.m[i].dim() {
                return Err(Error::Validation(format!("shape mismatch for tensor {i}")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of tensor {i}")));
            }
        }
        self.t += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(&mut **p)
                .and(*g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = array![[1.0, -2.0, 0.5]];
        let g = array![[3.0, -0.2, 1e-3]];
        let mut adam = Adam::new(AdamConfig::default(), &[(1, 3)]);
        adam.step(&mut [&mut p], &[&g]).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+eps)
        for (after, (before, grad)) in p.iter().zip([1.0, -2.0, 0.5].iter().zip(g.iter())) {
            let expected = before - 0.01 * grad / (grad.abs() + 1e-8);
            assert!((after - expected).abs() < 1e-15);
            assert!(((before - after) - 0.01 * grad.signum()).abs() < 1e-7);
        }
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradients_are_a_fixed_point() {
        let mut p = array![[0.3, 0.4], [-1.0, 2.0]];
        let before = p.clone();
        let g = Array2::zeros((2, 2));
        let mut adam = Adam::new(AdamConfig::default(), &[(2, 2)]);
        for _ in 0..10 {
            adam.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut p = array![[1.0]];
        let mut adam = Adam::new(AdamConfig::default(), &[(1, 1)]);
        let err = adam.step(&mut [&mut p], &[&array![[f64::NAN]]]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, array![[1.0]]);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn identical_streams_give_identical_trajectories() {
        let grads = [array![[0.1, -0.3]], array![[0.5, 0.2]], array![[-0.7, 0.0]]];
        let run = || {
            let mut p = array![[0.0, 1.0]];
            let mut adam = Adam::new(AdamConfig::default(), &[(1, 2)]);
            for g in &grads {
                adam.step(&mut [&mut p], &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
