//! Loss functions over (normalized) pooled embeddings, each with an analytic
//! gradient.
//!
//! Embedding matrices carry one row per entity. The coding-rate terms treat
//! those rows as the columns of `E ∈ R^{d×n}`.

mod linalg;
mod pairwise;
mod rate;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use linalg::{logdet_gram, logdet_psd, Cholesky};
pub(crate) use linalg::check_symmetric;
pub use pairwise::{alignment_loss, bpr_loss, infonce_loss, uniformity_loss, uniformity_value};
pub use rate::{coding_rate, compactness_loss, per_cluster_coding_rate, ClusterRate, MIN_CLUSTER_MASS};

use crate::error::{Error, Result};

/// A loss value with gradients on a user block and an item block.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_user: Array2<f64>,
    pub grad_item: Array2<f64>,
}

impl LossResult {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad_user.iter().chain(self.grad_item.iter()).all(|g| g.is_finite())
    }
}

/// A loss over a single embedding block.
#[derive(Debug, Clone, PartialEq)]
pub struct SideLoss {
    pub value: f64,
    pub grad: Array2<f64>,
}

impl SideLoss {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            value: 0.0,
            grad: Array2::zeros((rows, dim)),
        }
    }
}

/// Scalar hyperparameters of the objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    /// Distortion `ε²` of the coding rate.
    pub epsilon_sq: f64,
    /// Weight of the compactness terms.
    pub alpha: f64,
    /// InfoNCE temperature.
    pub tau: f64,
    /// Trade-off of the auxiliary term in the baseline objectives.
    pub lambda: f64,
}

impl Default for RateParams {
    fn default() -> Self {
        Self {
            epsilon_sq: 0.05,
            alpha: 0.01,
            tau: 0.2,
            lambda: 0.2,
        }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_sq > 0.0) || !(self.alpha >= 0.0) || !(self.tau > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid rate parameters {self:?}")));
        }
        Ok(())
    }
}

/// `L_align + α (L_compact(users) + L_compact(items))`.
pub fn ncl_total(align: &LossResult, compact_user: &SideLoss, compact_item: &SideLoss, alpha: f64) -> Result<LossResult> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    if align.grad_user.dim() != compact_user.grad.dim() || align.grad_item.dim() != compact_item.grad.dim() {
        return Err(Error::InvalidArgument("gradient shapes of the loss parts differ".into()));
    }
    let mut grad_user = align.grad_user.clone();
    grad_user.scaled_add(alpha, &compact_user.grad);
    let mut grad_item = align.grad_item.clone();
    grad_item.scaled_add(alpha, &compact_item.grad);
    Ok(LossResult {
        value: align.value + alpha * (compact_user.value + compact_item.value),
        grad_user,
        grad_item,
    })
}

/// `L_align + λ (L_uniform(users) + L_uniform(items))` with uniformity taken
/// over the distinct rows of `users` and `items`.
pub fn directau_loss(
    pairs: &[(usize, usize)],
    users: ndarray::ArrayView2<f64>,
    items: ndarray::ArrayView2<f64>,
    lambda: f64,
) -> Result<LossResult> {
    let mut out = alignment_loss(pairs, users, items);
    let uu = uniformity_loss(users)?;
    let ui = uniformity_loss(items)?;
    out.value += lambda * (uu.value + ui.value);
    out.grad_user.scaled_add(lambda, &uu.grad);
    out.grad_item.scaled_add(lambda, &ui.grad);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parts() -> (LossResult, SideLoss, SideLoss) {
        let align = LossResult {
            value: 0.7,
            grad_user: array![[1.0, 2.0]],
            grad_item: array![[-1.0, 0.5]],
        };
        let cu = SideLoss {
            value: -0.3,
            grad: array![[0.2, 0.2]],
        };
        let ci = SideLoss {
            value: 1.1,
            grad: array![[0.4, -0.4]],
        };
        (align, cu, ci)
    }

    #[test]
    fn total_recombines_parts() {
        let (a, cu, ci) = parts();
        let t0 = ncl_total(&a, &cu, &ci, 0.0).unwrap();
        assert_eq!(t0, a);
        let zu = SideLoss::zeros(1, 2);
        let zi = SideLoss::zeros(1, 2);
        assert_eq!(ncl_total(&a, &zu, &zi, 1.0).unwrap().value, a.value);
        let t = ncl_total(&a, &cu, &ci, 0.5).unwrap();
        assert!((t.value - (0.7 + 0.5 * (-0.3 + 1.1))).abs() < 1e-15);
        assert_eq!(t.grad_user, array![[1.1, 2.1]]);
        assert_eq!(t.grad_item, array![[-0.8, 0.3]]);
        assert!(ncl_total(&a, &cu, &ci, -1.0).is_err());
    }
}
