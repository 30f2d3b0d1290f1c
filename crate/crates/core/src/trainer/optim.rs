use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingTable;

/// Moment estimates for one parameter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
}

impl Moments {
    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }
}

/// Adam state for the user and item tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub user: Moments,
    pub item: Moments,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(table: &EmbeddingTable) -> Self {
        Self {
            user: Moments::zeros(table.user.dim()),
            item: Moments::zeros(table.item.dim()),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of one matrix at step `t` (1-based).
pub fn adam_update(param: &mut Array2<f64>, grad: &Array2<f64>, moments: &mut Moments, t: u64, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    assert_eq!(param.dim(), grad.dim(), "parameter and gradient shapes differ");
    assert_eq!(param.dim(), moments.m.dim(), "parameter and moment shapes differ");
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    Zip::from(param).and(grad).and(&mut moments.m).and(&mut moments.v).for_each(|p, &g, m, v| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    });
}

pub fn adam_step(table: &mut EmbeddingTable, grads: &EmbeddingTable, state: &mut OptimizerState, lr: f64) {
    state.step += 1;
    let (t, b1, b2, eps) = (state.step, state.beta1, state.beta2, state.eps);
    adam_update(&mut table.user, &grads.user, &mut state.user, t, lr, b1, b2, eps);
    adam_update(&mut table.item, &grads.item, &mut state.item, t, lr, b1, b2, eps);
}
