//! Dense Cholesky factorization and the log-det kernel shared by the
//! coding-rate terms.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument(format!("cholesky of non-square {}x{}", n, a.ncols())));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
            }
            let d = diag.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &Array2<f64> {
        &self.l
    }

    /// `2 Σ log Lᵢᵢ`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `A⁻¹` by triangular solves against the identity.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.l.nrows();
        // L⁻¹ by forward substitution, then A⁻¹ = L⁻ᵀ L⁻¹.
        let mut linv = Array2::<f64>::zeros((n, n));
        for col in 0..n {
            for i in col..n {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for k in col..i {
                    s -= self.l[[i, k]] * linv[[k, col]];
                }
                linv[[i, col]] = s / self.l[[i, i]];
            }
        }
        linv.t().dot(&linv)
    }
}

/// Log-determinant of a symmetric positive-definite matrix.
pub fn logdet_psd(m: ArrayView2<f64>) -> Result<f64> {
    check_symmetric(m, 1e-10)?;
    Ok(Cholesky::factor(m)?.logdet())
}

pub(crate) fn check_symmetric(m: ArrayView2<f64>, tol: f64) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidArgument(format!("matrix is {}x{}, not square", n, m.ncols())));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > tol {
                return Err(Error::InvalidArgument(format!("matrix is not symmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// `logdet(I + t YᵀY)` for `Y` with one row per sample, and its gradient
/// `2t · Y (I + tYᵀY)⁻¹`. Works on whichever Gram matrix is smaller, since
/// `logdet(I_d + tYᵀY) = logdet(I_m + tYYᵀ)`.
pub fn logdet_gram(y: ArrayView2<f64>, t: f64) -> (f64, Array2<f64>) {
    let (m, d) = y.dim();
    if m == 0 || t == 0.0 {
        return (0.0, Array2::zeros((m, d)));
    }
    let small_sample_side = m < d;
    let mut gram = if small_sample_side { y.dot(&y.t()) } else { y.t().dot(&y) };
    gram *= t;
    for k in 0..gram.nrows() {
        gram[[k, k]] += 1.0;
    }
    // I + tG with G PSD is positive definite.
    let chol = Cholesky::factor(gram.view()).expect("identity plus PSD Gram is positive definite");
    let inv = chol.inverse();
    let mut grad = if small_sample_side { inv.dot(&y) } else { y.dot(&inv) };
    grad *= 2.0 * t;
    (chol.logdet(), grad)
}
