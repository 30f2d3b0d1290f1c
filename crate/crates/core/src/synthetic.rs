//! Planted-block interaction graphs for controlled experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub users: usize,
    pub items: usize,
    pub blocks: usize,
    /// Edge probability when user and item share a block.
    pub p_within: f64,
    /// Edge probability across blocks.
    pub p_across: f64,
}

impl Default for BlockSpec {
    fn default() -> Self {
        Self {
            users: 600,
            items: 400,
            blocks: 4,
            p_within: 0.2,
            p_across: 0.005,
        }
    }
}

impl BlockSpec {
    pub fn user_block(&self, user: usize) -> usize {
        user * self.blocks / self.users
    }

    pub fn item_block(&self, item: usize) -> usize {
        item * self.blocks / self.items
    }
}

/// Samples every (user, item) edge independently. Raw ids are `u<n>` and
/// `i<n>`; entities that draw no edge are absent from the result.
pub fn planted_blocks(spec: &BlockSpec, seed: u64) -> InteractionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::new();
    for u in 0..spec.users {
        for i in 0..spec.items {
            let p = if spec.user_block(u) == spec.item_block(i) {
                spec.p_within
            } else {
                spec.p_across
            };
            if rng.random::<f64>() < p {
                raw.push((format!("u{u}"), format!("i{i}")));
            }
        }
    }
    InteractionSet::from_raw(raw.iter().map(|(u, i)| (u.as_str(), i.as_str(), None)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densities_match_spec() {
        let spec = BlockSpec::default();
        let set = planted_blocks(&spec, 1);
        assert_eq!(set.num_users, 600);
        assert_eq!(set.num_items, 400);
        let mut within = 0usize;
        for r in &set.records {
            let u: usize = set.user_ids.raw(r.user)[1..].parse().unwrap();
            let i: usize = set.item_ids.raw(r.item)[1..].parse().unwrap();
            within += (spec.user_block(u) == spec.item_block(i)) as usize;
        }
        let expected_within = 600.0 * 100.0 * 0.2;
        let expected_across = 600.0 * 300.0 * 0.005;
        assert!((within as f64 - expected_within).abs() < 0.05 * expected_within);
        let across = (set.len() - within) as f64;
        assert!((across - expected_across).abs() < 0.15 * expected_across);
        assert_eq!(set, planted_blocks(&spec, 1));
    }
}
