//! Collapse diagnostics: covariance spectra scaled into [0, 1], effective
//! rank, and alignment/uniformity of normalized embeddings.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{alignment_loss, check_symmetric, uniformity_value};

/// Default "collapsed dimension" thresholds, in scaled units.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [1e-3, 1e-2, 1e-1];

/// `(1/n) Σ (e − ē)(e − ē)ᵀ` over the rows of `e`.
pub fn covariance(e: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = e.nrows();
    if n < 2 {
        return Err(Error::UndefinedMetric(format!("covariance needs at least 2 rows, got {n}")));
    }
    let mean = e.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &e - &mean;
    let mut c = centered.t().dot(&centered) / n as f64;
    // Symmetrize away rounding in the product.
    let ct = c.t().to_owned();
    c = (&c + &ct) * 0.5;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Descending, divided by the largest value.
    pub values: Vec<f64>,
    pub raw_max: f64,
    pub effective_rank: f64,
    pub thresholds: Vec<f64>,
    /// `below[k]` counts scaled values strictly below `thresholds[k]`.
    pub below: Vec<usize>,
    /// Set when the covariance is identically zero; `values` are then all 0.
    pub degenerate: bool,
}

impl SpectrumReport {
    pub fn count_at_least(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v >= threshold).count()
    }

    pub fn count_below(&self, threshold: f64) -> usize {
        self.values.len() - self.count_at_least(threshold)
    }

    /// `index,scaled_singular_value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,scaled_singular_value\n");
        for (k, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{k},{v:.12e}\n"));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let counts: serde_json::Map<_, _> = self
            .thresholds
            .iter()
            .zip(&self.below)
            .map(|(t, b)| (format!("{t:e}"), serde_json::json!(b)))
            .collect();
        serde_json::json!({
            "dimension": self.values.len(),
            "raw_max": self.raw_max,
            "effective_rank": self.effective_rank,
            "degenerate": self.degenerate,
            "below_threshold": counts,
        })
    }
}

/// Eigenvalues of a symmetric PSD matrix, sorted descending, scaled by the
/// largest one.
pub fn spectrum(c: ArrayView2<f64>, thresholds: &[f64]) -> Result<SpectrumReport> {
    let d = c.nrows();
    if d == 0 || c.ncols() != d {
        return Err(Error::InvalidArgument(format!("covariance must be square and non-empty, got {:?}", c.dim())));
    }
    check_symmetric(c, 1e-8)?;
    let m = DMatrix::from_fn(d, d, |i, j| c[[i, j]]);
    let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let top = eig[0];
    let floor = -1e-8 * top.abs().max(1.0);
    if let Some(&neg) = eig.iter().find(|&&v| v < floor) {
        return Err(Error::InvalidArgument(format!("covariance is not PSD: eigenvalue {neg:e}")));
    }
    let eig: Vec<f64> = eig.into_iter().map(|v| v.max(0.0)).collect();
    let degenerate = top <= 0.0;
    let values: Vec<f64> = if degenerate { vec![0.0; d] } else { eig.iter().map(|v| v / top).collect() };
    let effective_rank = if degenerate {
        0.0
    } else {
        let total: f64 = eig.iter().sum();
        let h: f64 = eig.iter().map(|v| v / total).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum();
        h.exp()
    };
    let below = thresholds.iter().map(|&t| values.iter().filter(|&&v| v < t).count()).collect();
    Ok(SpectrumReport {
        values,
        raw_max: top.max(0.0),
        effective_rank,
        thresholds: thresholds.to_vec(),
        below,
        degenerate,
    })
}

/// Spectrum of the covariance of `e`'s rows.
pub fn embedding_spectrum(e: ArrayView2<f64>, thresholds: &[f64]) -> Result<SpectrumReport> {
    spectrum(covariance(e)?.view(), thresholds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMetrics {
    pub alignment: f64,
    pub uniformity_user: f64,
    pub uniformity_item: f64,
}

pub fn embedding_metrics(users: ArrayView2<f64>, items: ArrayView2<f64>, pairs: &[(usize, usize)]) -> Result<EmbeddingMetrics> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("alignment needs at least one positive pair".into()));
    }
    Ok(EmbeddingMetrics {
        alignment: alignment_loss(pairs, users, items).value,
        uniformity_user: uniformity_value(users)?,
        uniformity_item: uniformity_value(items)?,
    })
}
