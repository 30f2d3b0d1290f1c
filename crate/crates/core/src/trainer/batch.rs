use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Positive pairs of one mini-batch, with one negative item per pair when
/// negatives were requested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub pairs: Vec<(u32, u32)>,
    pub negatives: Vec<u32>,
}

/// Uniform draws over the items a user has not interacted with in training.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    positives: Vec<Vec<u32>>,
    num_items: u32,
}

impl NegativeSampler {
    /// `positives[u]` must be sorted.
    pub fn new(positives: Vec<Vec<u32>>, num_items: usize) -> Result<Self> {
        if let Some(u) = positives.iter().position(|p| p.len() >= num_items) {
            return Err(Error::InvalidArgument(format!("user {u} interacted with every item; no negatives exist")));
        }
        Ok(Self {
            positives,
            num_items: num_items as u32,
        })
    }

    pub fn is_positive(&self, user: u32, item: u32) -> bool {
        self.positives[user as usize].binary_search(&item).is_ok()
    }

    pub fn sample(&self, user: u32, rng: &mut impl Rng) -> u32 {
        loop {
            let j = rng.random_range(0..self.num_items);
            if !self.is_positive(user, j) {
                return j;
            }
        }
    }
}

/// The RNG used for the batches of `epoch`.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Shuffles `pairs` with a generator keyed by `(seed, epoch)` and cuts them
/// into batches of `batch_size`, keeping the final short batch.
pub fn minibatch_iter(
    pairs: &[(u32, u32)],
    batch_size: usize,
    epoch: usize,
    seed: u64,
    negatives: Option<&NegativeSampler>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let mut rng = epoch_rng(seed, epoch);
    let mut order: Vec<u32> = (0..pairs.len() as u32).collect();
    order.shuffle(&mut rng);
    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let pairs: Vec<(u32, u32)> = chunk.iter().map(|&k| pairs[k as usize]).collect();
            let negatives = match negatives {
                Some(s) => pairs.iter().map(|&(u, _)| s.sample(u, &mut rng)).collect(),
                None => Vec::new(),
            };
            Batch { pairs, negatives }
        })
        .collect())
}
