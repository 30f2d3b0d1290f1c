use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the per-entity weights of a [`MembershipSet`] relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipMode {
    /// One-hot rows.
    Hard,
    /// Probability rows summing to one.
    Soft,
    /// Overlapping 0/1 indicator clusters; rows may sum to anything.
    Indicator,
}

/// Nonzero diagonal entries of one membership matrix `Πₖ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// `(entity, weight)` sorted by entity, weights in `(0, 1]`.
    pub members: Vec<(u32, f64)>,
}

impl Cluster {
    /// `tr(Πₖ)`.
    pub fn trace(&self) -> f64 {
        self.members.iter().map(|&(_, w)| w).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipSet {
    pub num_entities: usize,
    pub clusters: Vec<Cluster>,
    pub mode: MembershipMode,
}

impl MembershipSet {
    /// Every entity in one cluster with weight one.
    pub fn single(num_entities: usize) -> Self {
        Self {
            num_entities,
            clusters: vec![Cluster {
                members: (0..num_entities as u32).map(|e| (e, 1.0)).collect(),
            }],
            mode: MembershipMode::Hard,
        }
    }

    /// No clusters at all: the per-cluster rate of this set is zero.
    pub fn empty(num_entities: usize) -> Self {
        Self {
            num_entities,
            clusters: Vec::new(),
            mode: MembershipMode::Soft,
        }
    }

    /// From an entity × cluster weight matrix; entries at or below `prune`
    /// are dropped.
    pub fn from_dense(weights: &Array2<f64>, mode: MembershipMode, prune: f64) -> Self {
        let (n, k) = weights.dim();
        let mut clusters = vec![Cluster { members: Vec::new() }; k];
        for e in 0..n {
            for (c, cluster) in clusters.iter_mut().enumerate() {
                let w = weights[[e, c]];
                if w > prune {
                    cluster.members.push((e as u32, w));
                }
            }
        }
        Self {
            num_entities: n,
            clusters,
            mode,
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Entity × cluster weight matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_entities, self.clusters.len()));
        for (c, cluster) in self.clusters.iter().enumerate() {
            for &(e, w) in &cluster.members {
                out[[e as usize, c]] = w;
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.num_entities];
        for cluster in &self.clusters {
            for &(e, w) in &cluster.members {
                sums[e as usize] += w;
            }
        }
        sums
    }

    /// Checks weights are in `[0,1]`, soft rows sum to one within `tol` and
    /// hard rows are one-hot.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for cluster in &self.clusters {
            for &(e, w) in &cluster.members {
                if e as usize >= self.num_entities || !(0.0..=1.0 + tol).contains(&w) {
                    return Err(Error::InvalidArgument(format!("bad membership ({e}, {w})")));
                }
            }
        }
        match self.mode {
            MembershipMode::Indicator => Ok(()),
            MembershipMode::Soft | MembershipMode::Hard => {
                let mut counts = vec![0usize; self.num_entities];
                for cluster in &self.clusters {
                    for &(e, w) in &cluster.members {
                        counts[e as usize] += 1;
                        if self.mode == MembershipMode::Hard && w != 1.0 {
                            return Err(Error::InvalidArgument(format!("hard membership weight {w}")));
                        }
                    }
                }
                for (e, s) in self.row_sums().into_iter().enumerate() {
                    if (s - 1.0).abs() > tol {
                        return Err(Error::InvalidArgument(format!("entity {e} weights sum to {s}")));
                    }
                    if self.mode == MembershipMode::Hard && counts[e] != 1 {
                        return Err(Error::InvalidArgument(format!("entity {e} is not one-hot")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Restricts every cluster to `entities` and re-indexes members by their
    /// position in that slice. Clusters left empty are kept (with no members)
    /// so cluster indices stay stable.
    pub fn restrict(&self, entities: &[u32]) -> MembershipSet {
        let mut local = vec![u32::MAX; self.num_entities];
        for (pos, &e) in entities.iter().enumerate() {
            local[e as usize] = pos as u32;
        }
        let clusters = self
            .clusters
            .iter()
            .map(|c| {
                let mut members: Vec<(u32, f64)> = c
                    .members
                    .iter()
                    .filter_map(|&(e, w)| {
                        let l = local[e as usize];
                        (l != u32::MAX).then_some((l, w))
                    })
                    .collect();
                members.sort_unstable_by_key(|&(e, _)| e);
                Cluster { members }
            })
            .collect();
        MembershipSet {
            num_entities: entities.len(),
            clusters,
            mode: self.mode,
        }
    }

    /// Drops weights below `min_weight` and rescales each entity's remaining
    /// weights to its original row sum. An entity whose weights would all be
    /// dropped keeps its largest one.
    pub fn pruned(&self, min_weight: f64) -> MembershipSet {
        let sums = self.row_sums();
        let mut top = vec![(usize::MAX, f64::NEG_INFINITY); self.num_entities];
        for (c, cluster) in self.clusters.iter().enumerate() {
            for &(e, w) in &cluster.members {
                if w > top[e as usize].1 {
                    top[e as usize] = (c, w);
                }
            }
        }
        let mut clusters: Vec<Cluster> = self
            .clusters
            .iter()
            .enumerate()
            .map(|(c, cluster)| Cluster {
                members: cluster
                    .members
                    .iter()
                    .copied()
                    .filter(|&(e, w)| w >= min_weight || top[e as usize].0 == c)
                    .collect(),
            })
            .collect();
        let mut kept = vec![0.0; self.num_entities];
        for cluster in &clusters {
            for &(e, w) in &cluster.members {
                kept[e as usize] += w;
            }
        }
        for cluster in &mut clusters {
            for (e, w) in &mut cluster.members {
                *w *= sums[*e as usize] / kept[*e as usize];
            }
        }
        MembershipSet {
            num_entities: self.num_entities,
            clusters,
            mode: self.mode,
        }
    }

    /// `entity<TAB>cluster<TAB>weight` lines, cluster-major.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for (c, cluster) in self.clusters.iter().enumerate() {
            for &(e, w) in &cluster.members {
                writeln!(s, "{e}\t{c}\t{w}").unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dense_roundtrip_and_validation() {
        let w = array![[0.25, 0.75], [1.0, 0.0], [0.5, 0.5]];
        let m = MembershipSet::from_dense(&w, MembershipMode::Soft, 0.0);
        assert_eq!(m.to_dense(), w);
        assert_eq!(m.clusters[1].members.len(), 2);
        m.validate(1e-12).unwrap();
        assert!((m.clusters[0].trace() - 1.75).abs() < 1e-15);

        let bad = MembershipSet::from_dense(&array![[0.5, 0.4]], MembershipMode::Soft, 0.0);
        assert!(bad.validate(1e-8).is_err());
        let not_hot = MembershipSet::from_dense(&array![[0.5, 0.5]], MembershipMode::Hard, 0.0);
        assert!(not_hot.validate(1e-8).is_err());
        MembershipSet::single(4).validate(0.0).unwrap();
    }

    #[test]
    fn restrict_reindexes() {
        let w = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let m = MembershipSet::from_dense(&w, MembershipMode::Hard, 0.0);
        let r = m.restrict(&[3, 0]);
        assert_eq!(r.num_entities, 2);
        assert_eq!(r.clusters[0].members, vec![(1, 1.0)]);
        assert_eq!(r.clusters[1].members, vec![(0, 1.0)]);
        assert_eq!(m.to_text().lines().next(), Some("0\t0\t1"));
    }

    #[test]
    fn pruning_keeps_row_sums() {
        let w = ndarray::array![[0.7, 0.29, 0.01], [0.4, 0.3, 0.3], [0.001, 0.001, 0.998]];
        let m = MembershipSet::from_dense(&w, MembershipMode::Soft, 0.0).pruned(0.05);
        for s in m.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        let d = m.to_dense();
        assert_eq!(d[[0, 2]], 0.0);
        assert!((d[[2, 2]] - 1.0).abs() < 1e-15);
        assert!((d[[1, 2]] - 0.3).abs() < 1e-15);
    }
}
