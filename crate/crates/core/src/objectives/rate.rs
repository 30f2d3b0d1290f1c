use ndarray::{Array2, ArrayView2};

use super::linalg::logdet_gram;
use super::SideLoss;
use crate::clustering::MembershipSet;
use crate::error::{Error, Result};

/// Clusters whose trace falls at or below this mass are skipped.
pub const MIN_CLUSTER_MASS: f64 = 1e-9;

fn check_eps(epsilon_sq: f64) -> Result<()> {
    if !(epsilon_sq > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon² must be positive, got {epsilon_sq}")));
    }
    Ok(())
}

/// `R(E, ε) = ½ logdet(I + d/(nε²) E Eᵀ)` for `n` rows of dimension `d`;
/// gradient `t (I + tEEᵀ)⁻¹ E` in row layout.
pub fn coding_rate(e: ArrayView2<f64>, epsilon_sq: f64) -> Result<SideLoss> {
    check_eps(epsilon_sq)?;
    let (n, d) = e.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("coding rate of an empty set".into()));
    }
    let t = d as f64 / (n as f64 * epsilon_sq);
    let (logdet, mut grad) = logdet_gram(e, t);
    grad *= 0.5;
    Ok(SideLoss {
        value: 0.5 * logdet,
        grad,
    })
}

/// Per-cluster rate plus the number of clusters skipped for having no mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRate {
    pub loss: SideLoss,
    pub skipped: usize,
}

/// `Rᶜ(E, ε | Π) = Σₖ tr(Πₖ)/(2n) · logdet(I + d/(tr(Πₖ)ε²) E Πₖ Eᵀ)` with
/// `memberships` indexed by row of `e`.
pub fn per_cluster_coding_rate(e: ArrayView2<f64>, epsilon_sq: f64, memberships: &MembershipSet) -> Result<ClusterRate> {
    check_eps(epsilon_sq)?;
    let (n, d) = e.dim();
    if memberships.num_entities != n {
        return Err(Error::InvalidArgument(format!(
            "memberships cover {} entities, embedding block has {n} rows",
            memberships.num_entities
        )));
    }
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, d));
    let mut skipped = 0;
    for cluster in &memberships.clusters {
        let trace = cluster.trace();
        if trace <= MIN_CLUSTER_MASS {
            skipped += 1;
            continue;
        }
        let t = d as f64 / (trace * epsilon_sq);
        // Y = Πₖ^{1/2} E restricted to members, so E Πₖ Eᵀ = YᵀY.
        let m = cluster.members.len();
        let mut y = Array2::zeros((m, d));
        for (row, &(ent, w)) in cluster.members.iter().enumerate() {
            y.row_mut(row).scaled_add(w.sqrt(), &e.row(ent as usize));
        }
        let (logdet, gy) = logdet_gram(y.view(), t);
        let coef = trace / (2.0 * n as f64);
        value += coef * logdet;
        for (row, &(ent, w)) in cluster.members.iter().enumerate() {
            grad.row_mut(ent as usize).scaled_add(coef * w.sqrt(), &gy.row(row));
        }
    }
    Ok(ClusterRate {
        loss: SideLoss { value, grad },
        skipped,
    })
}

/// `Rᶜ(E, ε | Π) − R(E, ε)`.
pub fn compactness_loss(e: ArrayView2<f64>, epsilon_sq: f64, memberships: &MembershipSet) -> Result<ClusterRate> {
    let mut within = per_cluster_coding_rate(e, epsilon_sq, memberships)?;
    let whole = coding_rate(e, epsilon_sq)?;
    within.loss.value -= whole.value;
    within.loss.grad -= &whole.grad;
    Ok(within)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{Cluster, MembershipMode};
    use ndarray::array;

    #[test]
    fn zero_embeddings_have_zero_rate() {
        let z = Array2::<f64>::zeros((5, 3));
        assert_eq!(coding_rate(z.view(), 0.1).unwrap().value, 0.0);
    }

    #[test]
    fn rank_one_closed_form() {
        // d = 2, one unit column, ε² = 0.5 ⇒ t = 4 and R = ½ ln 5.
        let e = array![[0.6, 0.8]];
        let r = coding_rate(e.view(), 0.5).unwrap();
        assert!((r.value - 0.5 * 5f64.ln()).abs() < 1e-14);
        assert!((r.value - 0.80472).abs() < 1e-5);
        assert!(coding_rate(e.view(), 0.0).is_err());
    }

    #[test]
    fn single_full_cluster_equals_whole_rate() {
        let e = array![[0.6, 0.8, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        let one = MembershipSet::single(4);
        let rc = per_cluster_coding_rate(e.view(), 0.05, &one).unwrap();
        let r = coding_rate(e.view(), 0.05).unwrap();
        assert!((rc.loss.value - r.value).abs() < 1e-12);
        let c = compactness_loss(e.view(), 0.05, &one).unwrap();
        assert!(c.loss.value.abs() < 1e-12);
        assert!(c.loss.grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn singleton_clusters_sum_to_half_log() {
        let e = array![[0.6, 0.8, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let n = 3;
        let eps = 0.2;
        let m = MembershipSet {
            num_entities: n,
            clusters: (0..n as u32).map(|k| Cluster { members: vec![(k, 1.0)] }).collect(),
            mode: MembershipMode::Hard,
        };
        let rc = per_cluster_coding_rate(e.view(), eps, &m).unwrap();
        let expected = 0.5 * (1.0 + 3.0 / eps).ln();
        assert!((rc.loss.value - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_clusters_are_skipped() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        let m = MembershipSet {
            num_entities: 2,
            clusters: vec![Cluster { members: vec![] }, Cluster { members: vec![(0, 1.0), (1, 1.0)] }],
            mode: MembershipMode::Hard,
        };
        let rc = per_cluster_coding_rate(e.view(), 0.5, &m).unwrap();
        assert_eq!(rc.skipped, 1);
        assert!(rc.loss.value > 0.0);
        let wrong = MembershipSet::single(3);
        assert!(per_cluster_coding_rate(e.view(), 0.5, &wrong).is_err());
    }
}
