use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::membership::{Cluster, MembershipMode, MembershipSet};
use crate::dataset::InteractionSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    User,
    Item,
}

/// Sparse symmetric shared-interaction counts `A = R Rᵀ` (or `Rᵀ R`).
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceGraph {
    /// Per entity, `(other, count)` sorted by `other`; includes the diagonal.
    pub rows: Vec<Vec<(u32, u32)>>,
}

impl CooccurrenceGraph {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, a: usize, b: usize) -> u32 {
        let row = &self.rows[a];
        row.binary_search_by_key(&(b as u32), |&(o, _)| o).map(|k| row[k].1).unwrap_or(0)
    }
}

/// Counts shared neighbours by walking each entity's two-hop neighbourhood.
/// Aborts once the number of stored entries would exceed `max_nnz`.
pub fn build_cooccurrence(train: &InteractionSet, side: Side, max_nnz: usize) -> Result<CooccurrenceGraph> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("co-occurrence of an empty training set".into()));
    }
    let (own, other) = match side {
        Side::User => (train.items_by_user(), train.users_by_item()),
        Side::Item => (train.users_by_item(), train.items_by_user()),
    };
    let n = own.len();
    let mut counts = vec![0u32; n];
    let mut touched = Vec::new();
    let mut rows = Vec::with_capacity(n);
    let mut nnz = 0usize;
    for neighbours in &own {
        for &mid in neighbours {
            for &v in &other[mid as usize] {
                if counts[v as usize] == 0 {
                    touched.push(v);
                }
                counts[v as usize] += 1;
            }
        }
        touched.sort_unstable();
        nnz += touched.len();
        if nnz > max_nnz {
            return Err(Error::TooLarge { nnz, cap: max_nnz });
        }
        rows.push(touched.iter().map(|&v| (v, counts[v as usize])).collect());
        for &v in &touched {
            counts[v as usize] = 0;
        }
        touched.clear();
    }
    Ok(CooccurrenceGraph { rows })
}

/// Membership threshold `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Threshold {
    Absolute(f64),
    /// Per-column quantile of the nonzero counts (nearest rank).
    Quantile(f64),
}

fn column_threshold(counts: &[(u32, u32)], eta: Threshold) -> f64 {
    match eta {
        Threshold::Absolute(v) => v,
        Threshold::Quantile(q) => {
            let mut vals: Vec<u32> = counts.iter().map(|&(_, c)| c).collect();
            if vals.is_empty() {
                return f64::INFINITY;
            }
            vals.sort_unstable();
            let rank = ((q * vals.len() as f64).ceil() as usize).clamp(1, vals.len());
            vals[rank - 1] as f64
        }
    }
}

/// One indicator cluster per entity `k`: `{v : A_vk ≥ η}`. Empty clusters
/// are dropped.
pub fn thresholded_memberships(a: &CooccurrenceGraph, eta: Threshold) -> Result<MembershipSet> {
    match eta {
        Threshold::Absolute(v) if !(v > 0.0) => {
            return Err(Error::InvalidArgument(format!("threshold must be positive, got {v}")))
        }
        Threshold::Quantile(q) if !(0.0..=1.0).contains(&q) => {
            return Err(Error::InvalidArgument(format!("quantile must lie in [0,1], got {q}")))
        }
        _ => {}
    }
    let clusters = a
        .rows
        .iter()
        .filter_map(|col| {
            let eta = column_threshold(col, eta);
            let members: Vec<(u32, f64)> = col
                .iter()
                .filter(|&&(_, c)| c as f64 >= eta)
                .map(|&(v, _)| (v, 1.0))
                .collect();
            (!members.is_empty()).then_some(Cluster { members })
        })
        .collect();
    Ok(MembershipSet {
        num_entities: a.len(),
        clusters,
        mode: MembershipMode::Indicator,
    })
}

/// `m` clusters drawn uniformly without replacement, kept in their original
/// order. Asking for at least as many clusters as exist returns all of them.
pub fn sample_memberships(memberships: &MembershipSet, m: usize, seed: u64) -> Result<MembershipSet> {
    if m == 0 {
        return Err(Error::InvalidArgument("must sample at least one cluster".into()));
    }
    let k = memberships.num_clusters();
    if m >= k {
        return Ok(memberships.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, k, m).into_vec();
    picked.sort_unstable();
    Ok(MembershipSet {
        num_entities: memberships.num_entities,
        clusters: picked.into_iter().map(|c| memberships.clusters[c].clone()).collect(),
        mode: memberships.mode,
    })
}
