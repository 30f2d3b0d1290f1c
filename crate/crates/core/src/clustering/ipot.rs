//! Equal-partition assignment by the inexact proximal point method for
//! optimal transport.
//!
//! Solves `min ⟨Q, −log P⟩` over `{Q ≥ 0 : Q1 = 1/K, Qᵀ1 = 1/n}`. Each outer
//! iteration takes a proximal step with the KL divergence to the previous
//! plan, `Q ← argmin ⟨Q, C⟩ + β·KL(Q‖Q_prev)`, approximately, with a few
//! Sinkhorn scaling sweeps on the kernel `exp(−C/β) ⊙ Q_prev`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::membership::{MembershipMode, MembershipSet};
use crate::error::{Error, Result};

/// Lower bound applied to `P` before taking logs.
const P_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpotConfig {
    /// Proximal weight `β`.
    pub beta: f64,
    pub max_iterations: usize,
    pub inner_sweeps: usize,
    /// Stop once both the ℓ1 marginal error and the ℓ1 change between
    /// successive plans drop to this value.
    pub tol: f64,
}

impl Default for IpotConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            max_iterations: 50,
            inner_sweeps: 1,
            tol: 1e-6,
        }
    }
}

/// A `K × n` transport plan.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    pub q: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖Q1 − 1/K‖₁ + ‖Qᵀ1 − 1/n‖₁`.
    pub marginal_error: f64,
}

impl AssignmentMatrix {
    pub fn from_matrix(q: Array2<f64>) -> Self {
        let marginal_error = marginal_error(q.view());
        Self {
            q,
            converged: true,
            iterations: 0,
            marginal_error,
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.q.nrows()
    }

    pub fn num_entities(&self) -> usize {
        self.q.ncols()
    }
}

pub fn marginal_error(q: ArrayView2<f64>) -> f64 {
    let (k, n) = q.dim();
    let rows = q.sum_axis(Axis(1));
    let cols = q.sum_axis(Axis(0));
    rows.iter().map(|r| (r - 1.0 / k as f64).abs()).sum::<f64>() + cols.iter().map(|c| (c - 1.0 / n as f64).abs()).sum::<f64>()
}

/// `⟨Q, −log P⟩` with `P` floored.
pub fn assignment_cost(q: ArrayView2<f64>, p: ArrayView2<f64>) -> f64 {
    q.iter().zip(p.iter()).map(|(&qv, &pv)| -qv * pv.max(P_FLOOR).ln()).sum()
}

pub fn ipot_assign(p: ArrayView2<f64>, config: &IpotConfig) -> Result<AssignmentMatrix> {
    let (k, n) = p.dim();
    if k == 0 || n == 0 {
        return Err(Error::InvalidArgument("transport problem with an empty side".into()));
    }
    if !(config.beta > 0.0) || config.inner_sweeps == 0 {
        return Err(Error::InvalidArgument(format!("invalid IPOT configuration {config:?}")));
    }
    let mu = 1.0 / k as f64;
    let nu = 1.0 / n as f64;
    // exp(−C/β) with C = −log P, normalized by its max to keep the scalings
    // in range; a constant factor does not change the plan.
    let log_kernel = p.mapv(|v| v.max(P_FLOOR).ln() / config.beta);
    let top = log_kernel.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let kernel = log_kernel.mapv(|v| (v - top).exp());

    let mut plan = Array2::from_elem((k, n), mu * nu);
    let mut b = Array1::from_elem(n, 1.0);
    let mut best = AssignmentMatrix {
        q: plan.clone(),
        converged: false,
        iterations: 0,
        marginal_error: f64::INFINITY,
    };
    for it in 1..=config.max_iterations {
        let mut q = &kernel * &plan;
        // Rescale so products do not drift towards underflow.
        let total = q.sum();
        if !(total > 0.0) || !total.is_finite() {
            break;
        }
        q /= total;
        let mut a = Array1::zeros(k);
        for _ in 0..config.inner_sweeps {
            let qb = q.dot(&b);
            a = qb.mapv(|v| if v > 0.0 { mu / v } else { 0.0 });
            let qa = q.t().dot(&a);
            b = qa.mapv(|v| if v > 0.0 { nu / v } else { 0.0 });
        }
        for (mut row, &ai) in q.axis_iter_mut(Axis(0)).zip(a.iter()) {
            row *= ai;
            row *= &b;
        }
        if q.iter().any(|v| !v.is_finite()) {
            break;
        }
        let change: f64 = q.iter().zip(plan.iter()).map(|(a, b)| (a - b).abs()).sum();
        plan = q;
        let err = marginal_error(plan.view());
        // Every iterate after a scaling sweep is close to feasible, so the
        // plan must also have stopped moving before we call it converged.
        let converged = err <= config.tol && change <= config.tol;
        if err <= best.marginal_error.max(config.tol) || converged {
            best = AssignmentMatrix {
                q: plan.clone(),
                converged,
                iterations: it,
                marginal_error: err,
            };
        }
        if converged {
            return Ok(best);
        }
    }
    Ok(best)
}

/// Soft: `π_{uk} = n·Q_{ku}`, rows renormalized. Hard: one-hot argmax per
/// entity, ties to the lowest cluster index.
pub fn memberships_from_assignments(q: &AssignmentMatrix, mode: MembershipMode) -> Result<MembershipSet> {
    let (k, n) = q.q.dim();
    let mut weights = Array2::zeros((n, k));
    match mode {
        MembershipMode::Soft => {
            for (u, col) in q.q.axis_iter(Axis(1)).enumerate() {
                let s: f64 = col.sum();
                if s > 0.0 {
                    for (c, &v) in col.iter().enumerate() {
                        weights[[u, c]] = v / s;
                    }
                } else {
                    weights.row_mut(u).fill(1.0 / k as f64);
                }
            }
        }
        MembershipMode::Hard => {
            for (u, col) in q.q.axis_iter(Axis(1)).enumerate() {
                let mut best = 0;
                for (c, &v) in col.iter().enumerate() {
                    if v > col[best] {
                        best = c;
                    }
                }
                weights[[u, best]] = 1.0;
            }
        }
        MembershipMode::Indicator => {
            return Err(Error::InvalidArgument("assignments yield hard or soft memberships".into()))
        }
    }
    Ok(MembershipSet::from_dense(&weights, mode, 0.0))
}
