use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{LossResult, SideLoss};
use crate::error::{Error, Result};

/// `−ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Σ −ln σ(eᵤᵀeᵢ − eᵤᵀeⱼ)` over `(u, i⁺, j⁻)` triples indexing rows of
/// `users` and `items`.
pub fn bpr_loss(triples: &[(usize, usize, usize)], users: ArrayView2<f64>, items: ArrayView2<f64>) -> LossResult {
    let mut grad_user = Array2::zeros(users.raw_dim());
    let mut grad_item = Array2::zeros(items.raw_dim());
    let mut value = 0.0;
    for &(u, i, j) in triples {
        let eu = users.row(u);
        let diff = &items.row(i) - &items.row(j);
        let x = eu.dot(&diff);
        value += neg_log_sigmoid(x);
        let c = -sigmoid(-x);
        grad_user.row_mut(u).scaled_add(c, &diff);
        grad_item.row_mut(i).scaled_add(c, &eu);
        grad_item.row_mut(j).scaled_add(-c, &eu);
    }
    LossResult {
        value,
        grad_user,
        grad_item,
    }
}

/// `Σᵤ −log softmax_v(aᵤᵀb_v/τ)[u]` with in-batch negatives: row `u` of
/// `view_b` is the positive of row `u` of `view_a`.
pub fn infonce_loss(view_a: ArrayView2<f64>, view_b: ArrayView2<f64>, tau: f64) -> Result<LossResult> {
    if view_a.dim() != view_b.dim() {
        return Err(Error::InvalidArgument("InfoNCE views must have equal shapes".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let n = view_a.nrows();
    let mut s = view_a.dot(&view_b.t());
    s /= tau;
    let mut value = 0.0;
    // s becomes softmax(s) − I row by row.
    for (u, mut row) in s.axis_iter_mut(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + z.ln();
        value += lse - row[u];
        row.mapv_inplace(|v| (v - lse).exp());
        row[u] -= 1.0;
    }
    let mut grad_user = s.dot(&view_b);
    grad_user /= tau;
    let mut grad_item = s.t().dot(&view_a);
    grad_item /= tau;
    debug_assert_eq!(grad_user.nrows(), n);
    Ok(LossResult {
        value,
        grad_user,
        grad_item,
    })
}

/// Mean of `‖eᵤ − eᵢ‖²` over the pairs.
pub fn alignment_loss(pairs: &[(usize, usize)], users: ArrayView2<f64>, items: ArrayView2<f64>) -> LossResult {
    let mut grad_user = Array2::zeros(users.raw_dim());
    let mut grad_item = Array2::zeros(items.raw_dim());
    if pairs.is_empty() {
        return LossResult {
            value: 0.0,
            grad_user,
            grad_item,
        };
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    for &(u, i) in pairs {
        let diff = &users.row(u) - &items.row(i);
        value += diff.dot(&diff);
        grad_user.row_mut(u).scaled_add(2.0 * scale, &diff);
        grad_item.row_mut(i).scaled_add(-2.0 * scale, &diff);
    }
    LossResult {
        value: value * scale,
        grad_user,
        grad_item,
    }
}

fn squared_distances(e: ArrayView2<f64>) -> Array2<f64> {
    let gram = e.dot(&e.t());
    let sq: Array1<f64> = gram.diag().to_owned();
    let n = e.nrows();
    Array2::from_shape_fn((n, n), |(a, b)| (sq[a] + sq[b] - 2.0 * gram[[a, b]]).max(0.0))
}

/// `log mean_{u≠v} exp(−2‖eᵤ − e_v‖²)`, value only.
pub fn uniformity_value(e: ArrayView2<f64>) -> Result<f64> {
    Ok(uniformity_loss(e)?.value)
}

/// `log mean_{u≠v} exp(−2‖eᵤ − e_v‖²)` with its gradient.
pub fn uniformity_loss(e: ArrayView2<f64>) -> Result<SideLoss> {
    let n = e.nrows();
    if n < 2 {
        return Err(Error::UndefinedMetric(format!("uniformity needs at least 2 rows, got {n}")));
    }
    let mut k = squared_distances(e);
    k.mapv_inplace(|d| -2.0 * d);
    let max = k
        .indexed_iter()
        .filter(|((a, b), _)| a != b)
        .fold(f64::NEG_INFINITY, |m, (_, &v)| m.max(v));
    for ((a, b), v) in k.indexed_iter_mut() {
        *v = if a == b { 0.0 } else { (*v - max).exp() };
    }
    let total: f64 = k.sum();
    let pairs = (n * (n - 1)) as f64;
    let value = max + total.ln() - pairs.ln();
    // ∂/∂eᵤ = −8/total · Σ_v w_uv (eᵤ − e_v), the 8 being 2 (symmetry) × 4.
    let weight_sums = k.sum_axis(Axis(1));
    let mut grad = e.to_owned();
    for (mut row, &w) in grad.axis_iter_mut(Axis(0)).zip(&weight_sums) {
        row *= w;
    }
    grad -= &k.dot(&e);
    grad *= -8.0 / total;
    Ok(SideLoss { value, grad })
}
