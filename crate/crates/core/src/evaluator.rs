//! Full-catalogue top-n evaluation: every item is scored, the user's known
//! items are masked out, and Recall@n / NDCG@n are macro-averaged over users
//! with non-empty ground truth.

use std::cmp::Ordering;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub cutoffs: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    /// Users that contributed to the averages.
    pub users: usize,
}

impl RankingMetrics {
    pub fn recall_at(&self, n: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == n).map(|k| self.recall[k])
    }

    pub fn ndcg_at(&self, n: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == n).map(|k| self.ndcg[k])
    }

    /// `{"<n>": {"recall": .., "ndcg": ..}, ...}` in cutoff order.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        for (k, &c) in self.cutoffs.iter().enumerate() {
            m.insert(c.to_string(), json!({"recall": self.recall[k], "ndcg": self.ndcg[k]}));
        }
        Value::Object(m)
    }
}

/// Ground truth and mask, one sorted item list per user.
#[derive(Debug, Clone, Copy)]
pub struct EvalTargets<'a> {
    pub ground_truth: &'a [Vec<u32>],
    pub mask: &'a [Vec<u32>],
}

fn check_cutoffs(cutoffs: &[usize], num_items: usize) -> Result<usize> {
    if cutoffs.is_empty() || cutoffs.windows(2).any(|w| w[0] >= w[1]) || cutoffs[0] == 0 {
        return Err(Error::InvalidArgument(format!("cutoffs must be positive and strictly ascending: {cutoffs:?}")));
    }
    let max = *cutoffs.last().unwrap();
    if max > num_items {
        return Err(Error::InvalidArgument(format!("cutoff {max} exceeds the {num_items} items")));
    }
    Ok(max)
}

/// Best-first ordering: higher score, then lower item index.
fn rank_order(scores: &[f64], a: u32, b: u32) -> Ordering {
    scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b))
}

/// Top `n` unmasked items for each user in `users`.
pub fn top_n(user_emb: ArrayView2<f64>, item_emb: ArrayView2<f64>, mask: &[Vec<u32>], users: &[u32], n: usize) -> Vec<Vec<u32>> {
    const CHUNK: usize = 256;
    let num_items = item_emb.nrows();
    users
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            let block = user_emb.select(Axis(0), &chunk.iter().map(|&u| u as usize).collect::<Vec<_>>());
            let scores = block.dot(&item_emb.t());
            chunk
                .iter()
                .zip(scores.axis_iter(Axis(0)))
                .map(|(&u, row)| {
                    let mut s = row.to_vec();
                    let masked = &mask[u as usize];
                    for &i in masked {
                        s[i as usize] = f64::NEG_INFINITY;
                    }
                    let mut idx: Vec<u32> = (0..num_items as u32).collect();
                    let keep = n.min(num_items - masked.len().min(num_items));
                    if keep == 0 {
                        return Vec::new();
                    }
                    if keep < idx.len() {
                        idx.select_nth_unstable_by(keep - 1, |&a, &b| rank_order(&s, a, b));
                        idx.truncate(keep);
                    }
                    idx.sort_unstable_by(|&a, &b| rank_order(&s, a, b));
                    idx
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Per-user `(recall, ndcg)` at each cutoff from a ranked list.
pub fn user_metrics(list: &[u32], truth: &[u32], cutoffs: &[usize]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(cutoffs.len());
    let (mut hits, mut dcg, mut pos) = (0usize, 0.0, 0usize);
    for &n in cutoffs {
        while pos < n.min(list.len()) {
            if truth.binary_search(&list[pos]).is_ok() {
                hits += 1;
                dcg += discount(pos + 1);
            }
            pos += 1;
        }
        let idcg: f64 = (1..=n.min(truth.len())).map(discount).sum();
        out.push((hits as f64 / truth.len() as f64, dcg / idcg));
    }
    out
}

/// Averages per-user metrics over `users` whose ground truth is non-empty.
pub fn metrics_from_lists(lists: &[Vec<u32>], users: &[u32], ground_truth: &[Vec<u32>], cutoffs: &[usize]) -> RankingMetrics {
    let mut recall = vec![0.0; cutoffs.len()];
    let mut ndcg = vec![0.0; cutoffs.len()];
    let mut count = 0usize;
    for (list, &u) in lists.iter().zip(users) {
        let truth = &ground_truth[u as usize];
        if truth.is_empty() {
            continue;
        }
        count += 1;
        for (k, (r, g)) in user_metrics(list, truth, cutoffs).into_iter().enumerate() {
            recall[k] += r;
            ndcg[k] += g;
        }
    }
    if count > 0 {
        recall.iter_mut().chain(ndcg.iter_mut()).for_each(|v| *v /= count as f64);
    }
    RankingMetrics {
        cutoffs: cutoffs.to_vec(),
        recall,
        ndcg,
        users: count,
    }
}

/// Users with at least one ground-truth item.
pub fn users_with_truth(ground_truth: &[Vec<u32>]) -> Vec<u32> {
    (0..ground_truth.len() as u32).filter(|&u| !ground_truth[u as usize].is_empty()).collect()
}

pub fn rank_and_score(
    user_emb: ArrayView2<f64>,
    item_emb: ArrayView2<f64>,
    targets: EvalTargets<'_>,
    cutoffs: &[usize],
) -> Result<RankingMetrics> {
    let users = users_with_truth(targets.ground_truth);
    rank_and_score_users(user_emb, item_emb, targets, cutoffs, &users)
}

/// As [`rank_and_score`], restricted to `users`.
pub fn rank_and_score_users(
    user_emb: ArrayView2<f64>,
    item_emb: ArrayView2<f64>,
    targets: EvalTargets<'_>,
    cutoffs: &[usize],
    users: &[u32],
) -> Result<RankingMetrics> {
    let max = check_cutoffs(cutoffs, item_emb.nrows())?;
    check_shapes(user_emb, item_emb, targets)?;
    let lists = top_n(user_emb, item_emb, targets.mask, users, max);
    Ok(metrics_from_lists(&lists, users, targets.ground_truth, cutoffs))
}

fn check_shapes(user_emb: ArrayView2<f64>, item_emb: ArrayView2<f64>, t: EvalTargets<'_>) -> Result<()> {
    if user_emb.ncols() != item_emb.ncols() || t.ground_truth.len() != user_emb.nrows() || t.mask.len() != user_emb.nrows() {
        return Err(Error::InvalidArgument("evaluation inputs disagree on shape".into()));
    }
    Ok(())
}

/// Metrics for the test interactions whose item falls in `[lo, hi)` of
/// training degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub lo: u32,
    pub hi: u32,
    pub items: usize,
    pub interactions: usize,
    /// `None` when no ground-truth interaction falls in the bucket.
    pub metrics: Option<RankingMetrics>,
}

/// Ranks once over the full catalogue, then scores each degree bucket with
/// ground truth restricted to the bucket's items. Edges must be strictly
/// ascending; items at or beyond the last edge belong to no bucket.
pub fn degree_bucket_eval(
    user_emb: ArrayView2<f64>,
    item_emb: ArrayView2<f64>,
    targets: EvalTargets<'_>,
    cutoffs: &[usize],
    item_degree: &[u32],
    edges: &[u32],
) -> Result<Vec<BucketMetrics>> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("bucket edges must be strictly ascending: {edges:?}")));
    }
    if item_degree.len() != item_emb.nrows() {
        return Err(Error::InvalidArgument("item degree table does not match the item embeddings".into()));
    }
    let max = check_cutoffs(cutoffs, item_emb.nrows())?;
    check_shapes(user_emb, item_emb, targets)?;
    let users = users_with_truth(targets.ground_truth);
    let lists = top_n(user_emb, item_emb, targets.mask, &users, max);
    let mut out = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let in_bucket = |i: u32| (lo..hi).contains(&item_degree[i as usize]);
        let restricted: Vec<Vec<u32>> = targets
            .ground_truth
            .iter()
            .map(|gt| gt.iter().copied().filter(|&i| in_bucket(i)).collect())
            .collect();
        let interactions: usize = restricted.iter().map(Vec::len).sum();
        let items = (0..item_degree.len() as u32).filter(|&i| in_bucket(i)).count();
        let metrics = (interactions > 0).then(|| metrics_from_lists(&lists, &users, &restricted, cutoffs));
        out.push(BucketMetrics {
            lo,
            hi,
            items,
            interactions,
            metrics,
        });
    }
    Ok(out)
}
