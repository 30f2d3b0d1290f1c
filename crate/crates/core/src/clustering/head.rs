//! One-hidden-layer classifier `Φ: R^d → R^K` with a rectifier, trained by
//! full-batch gradient steps on the self-labeling cross-entropy.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ipot::AssignmentMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ClassifierHead {
    /// He-normal weights, zero biases.
    pub fn new(dim: usize, hidden: usize, clusters: usize, seed: u64) -> Result<Self> {
        if clusters < 2 || dim == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "classifier head needs dim, hidden >= 1 and K >= 2 (got {dim}, {hidden}, {clusters})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(0.0, (2.0 / dim as f64).sqrt()).unwrap();
        let n2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).unwrap();
        let w1 = Array2::from_shape_simple_fn((dim, hidden), || n1.sample(&mut rng));
        let w2 = Array2::from_shape_simple_fn((hidden, clusters), || n2.sample(&mut rng));
        Ok(Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(clusters),
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.w2.ncols()
    }

    fn hidden(&self, e: ArrayView2<f64>) -> Array2<f64> {
        let mut h = e.dot(&self.w1) + &self.b1;
        h.mapv_inplace(|v| v.max(0.0));
        h
    }

    /// Logits, one row per input row.
    pub fn logits(&self, e: ArrayView2<f64>) -> Array2<f64> {
        self.hidden(e).dot(&self.w2) + &self.b2
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.w2].iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.b1.iter().chain(self.b2.iter()).all(|v| v.is_finite())
    }
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
    z
}

/// `P` with `P_{yu} = softmax(Φ(eᵤ))_y / n`; columns sum to `1/n`.
pub fn classifier_forward(e: ArrayView2<f64>, head: &ClassifierHead) -> Array2<f64> {
    let n = e.nrows() as f64;
    let mut p = softmax_rows(head.logits(e)).reversed_axes();
    p /= n;
    p
}

/// Parameter gradients of the cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// `∂E/∂logits`, one row per input.
    pub logits: Array2<f64>,
}

/// `E(p, q) = −(1/n) Σᵤ Σ_y q(y|eᵤ) log p(y|eᵤ)` with `q(y|eᵤ) = n·Q_{yu}`,
/// and its gradients.
pub fn cross_entropy(e: ArrayView2<f64>, q: &AssignmentMatrix, head: &ClassifierHead) -> Result<(f64, HeadGradients)> {
    let n = e.nrows();
    if q.q.dim() != (head.num_clusters(), n) {
        return Err(Error::InvalidArgument(format!(
            "assignment is {:?}, expected ({}, {n})",
            q.q.dim(),
            head.num_clusters()
        )));
    }
    let nf = n as f64;
    let hidden = head.hidden(e);
    let logits = hidden.dot(&head.w2) + &head.b2;
    let probs = softmax_rows(logits.clone());
    let targets = q.q.t().mapv(|v| v * nf);

    let mut value = 0.0;
    for (z, t) in logits.axis_iter(Axis(0)).zip(targets.axis_iter(Axis(0))) {
        let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        value -= t.iter().zip(z.iter()).map(|(&ty, &zy)| ty * (zy - lse)).sum::<f64>();
    }
    value /= nf;

    // ∂/∂z_u = (p_u Σ_y q_uy − q_u)/n.
    let mut dz = probs;
    for (mut row, t) in dz.axis_iter_mut(Axis(0)).zip(targets.axis_iter(Axis(0))) {
        row *= t.sum();
        row -= &t;
    }
    dz /= nf;
    let w2 = hidden.t().dot(&dz);
    let b2 = dz.sum_axis(Axis(0));
    let mut dh = dz.dot(&head.w2.t());
    Zip::from(&mut dh).and(&hidden).for_each(|g, &h| {
        if h <= 0.0 {
            *g = 0.0;
        }
    });
    let w1 = e.t().dot(&dh);
    let b1 = dh.sum_axis(Axis(0));
    Ok((
        value,
        HeadGradients {
            w1,
            b1,
            w2,
            b2,
            logits: dz,
        },
    ))
}

/// One gradient step on the cross-entropy with `Q` held fixed. Returns the
/// updated head and the cross-entropy before the step.
pub fn update_classifier(
    e: ArrayView2<f64>,
    q: &AssignmentMatrix,
    head: &ClassifierHead,
    step_size: f64,
) -> Result<(ClassifierHead, f64)> {
    let (value, g) = cross_entropy(e, q, head)?;
    let mut next = head.clone();
    next.w1.scaled_add(-step_size, &g.w1);
    next.b1.scaled_add(-step_size, &g.b1);
    next.w2.scaled_add(-step_size, &g.w2);
    next.b2.scaled_add(-step_size, &g.b2);
    Ok((next, value))
}
