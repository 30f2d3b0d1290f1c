//! The epoch loop: shuffled positive-pair batches, full-graph propagation,
//! the configured loss, Adam updates, an epoch-end membership refresh, and
//! early stopping on validation NDCG.

mod batch;
mod checkpoint;
mod config;
mod optim;

use std::borrow::Cow;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use batch::{epoch_rng, minibatch_iter, Batch, NegativeSampler};
pub use checkpoint::{
    load_best_embeddings, load_checkpoint, load_checkpoint_config, load_output_embeddings, read_matrix, save_checkpoint, write_matrix,
};
pub use config::{Objective, Resample, TrainConfig};
pub use optim::{adam_step, adam_update, Moments, OptimizerState};

use crate::clustering::{
    build_cooccurrence, classifier_forward, ipot_assign, memberships_from_assignments, sample_memberships,
    thresholded_memberships, update_classifier, ClassifierHead, MembershipMode, MembershipSet, Side,
};
use crate::dataset::{build_adjacency, NormalizedAdjacency, SplitDataset};
use crate::encoder::{backprop, init_embeddings, propagate, EmbeddingTable, ForwardCache, Pooling};
use crate::error::{Error, Result};
use crate::evaluator::{rank_and_score_users, users_with_truth, EvalTargets, RankingMetrics};
use crate::objectives::{
    alignment_loss, bpr_loss, compactness_loss, directau_loss, infonce_loss, ncl_total, LossResult,
    SideLoss,
};

/// Statistics of one side's membership refresh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideRefresh {
    /// Classifier cross-entropy against the new assignment, before the head
    /// update.
    pub cross_entropy: f64,
    pub ipot_iterations: usize,
    pub ipot_converged: bool,
    pub marginal_error: f64,
    /// Clusters that kept at least one member.
    pub occupied_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefreshStats {
    pub user: SideRefresh,
    pub item: SideRefresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch loss.
    pub loss: f64,
    pub cutoffs: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub seconds: f64,
    pub refresh: Option<RefreshStats>,
}

impl EpochReport {
    pub fn ndcg_at(&self, n: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == n).map(|k| self.ndcg[k])
    }
}

/// The best-validation parameters seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub score: f64,
    pub table: EmbeddingTable,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub config: TrainConfig,
    pub epoch: usize,
    pub table: EmbeddingTable,
    pub optimizer: OptimizerState,
    pub heads: Option<[ClassifierHead; 2]>,
    pub memberships: Option<[MembershipSet; 2]>,
    pub best: Option<BestSnapshot>,
    pub since_best: usize,
    pub history: Vec<EpochReport>,
}

/// Deterministic seed derivation (splitmix64 finalizer over `seed ⊕ tag`).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_VALIDATION: u64 = 0x7661_6c69;
const TAG_HEAD: u64 = 0x6865_6164;
const TAG_SAMPLE: u64 = 0x7361_6d70;

/// Embeddings every objective scores: pooled outputs, unit-normalized.
pub fn output_embeddings(adj: &NormalizedAdjacency, table: &EmbeddingTable, config: &TrainConfig) -> EmbeddingTable {
    let mut cache = propagate(adj, table, &Pooling::uniform(config.layers));
    cache.normalize();
    let (user, item) = cache.output();
    EmbeddingTable {
        user: user.to_owned(),
        item: item.to_owned(),
    }
}

/// Per-user ground truth for `truth` with the listed parts masked.
pub fn masked_targets(split: &SplitDataset, truth: crate::dataset::Part, mask_valid: bool) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    use crate::dataset::Part;
    let gt = match truth {
        Part::Train => split.train.items_by_user(),
        Part::Valid => split.valid.items_by_user(),
        Part::Test => split.test.items_by_user(),
    };
    let mut mask = split.train.items_by_user();
    if mask_valid {
        for (m, v) in mask.iter_mut().zip(split.valid.items_by_user()) {
            m.extend(v);
            m.sort_unstable();
            m.dedup();
        }
    }
    (gt, mask)
}

/// Sorted distinct ids and the local index of every input id.
fn localize(ids: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut distinct = ids.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let local = ids.iter().map(|id| distinct.binary_search(id).expect("present")).collect();
    (distinct, local)
}

fn gather(m: ArrayView2<f64>, rows: &[u32]) -> Array2<f64> {
    m.select(Axis(0), &rows.iter().map(|&r| r as usize).collect::<Vec<_>>())
}

fn scatter(grad: &Array2<f64>, rows: &[u32], full: &mut Array2<f64>) {
    for (g, &r) in grad.axis_iter(Axis(0)).zip(rows) {
        let mut row = full.row_mut(r as usize);
        row += &g;
    }
}

pub struct Trainer {
    config: TrainConfig,
    adj: NormalizedAdjacency,
    pooling: Pooling,
    pairs: Vec<(u32, u32)>,
    sampler: Option<NegativeSampler>,
    valid_truth: Vec<Vec<u32>>,
    train_mask: Vec<Vec<u32>>,
    valid_users: Vec<u32>,
    state: TrainerState,
}

impl Trainer {
    pub fn new(config: TrainConfig, split: &SplitDataset) -> Result<Self> {
        config.validate()?;
        let table = init_embeddings(split.num_users(), split.num_items(), config.dim, config.init_seed, config.init_scale)?;
        let optimizer = OptimizerState::new(&table);
        let (heads, memberships) = match config.objective {
            Objective::Ncl => {
                let ku = config.clusters_user.min(split.num_users()).max(2);
                let ki = config.clusters_item.min(split.num_items()).max(2);
                let hidden = 2 * config.dim;
                let heads = [
                    ClassifierHead::new(config.dim, hidden, ku, derive_seed(config.init_seed, TAG_HEAD))?,
                    ClassifierHead::new(config.dim, hidden, ki, derive_seed(config.init_seed, TAG_HEAD + 1))?,
                ];
                // No clusters before the first refresh: the compactness term
                // is then pure expansion, −R.
                let empty = [MembershipSet::empty(split.num_users()), MembershipSet::empty(split.num_items())];
                (Some(heads), Some(empty))
            }
            Objective::Nclg => {
                let side = |s| -> Result<MembershipSet> {
                    let a = build_cooccurrence(&split.train, s, config.cooccurrence_cap)?;
                    thresholded_memberships(&a, config.threshold)
                };
                (None, Some([side(Side::User)?, side(Side::Item)?]))
            }
            _ => (None, None),
        };
        let state = TrainerState {
            config: config.clone(),
            epoch: 0,
            table,
            optimizer,
            heads,
            memberships,
            best: None,
            since_best: 0,
            history: Vec::new(),
        };
        Self::with_state(state, split)
    }

    /// Continues a run from a saved state.
    pub fn resume(state: TrainerState, split: &SplitDataset) -> Result<Self> {
        state.config.validate()?;
        if state.table.num_users() != split.num_users() || state.table.num_items() != split.num_items() {
            return Err(Error::Checkpoint("checkpoint tables do not match the dataset".into()));
        }
        Self::with_state(state, split)
    }

    fn with_state(state: TrainerState, split: &SplitDataset) -> Result<Self> {
        if split.train.is_empty() {
            return Err(Error::EmptyDataset("training part is empty".into()));
        }
        let config = state.config.clone();
        let max_cut = *config.eval_cutoffs.last().expect("validated");
        if max_cut > split.num_items() {
            return Err(Error::InvalidArgument(format!("cutoff {max_cut} exceeds the {} items", split.num_items())));
        }
        let adj = build_adjacency(&split.train)?;
        let train_mask = split.train.items_by_user();
        let sampler = if config.objective.needs_negatives() {
            Some(NegativeSampler::new(train_mask.clone(), split.num_items())?)
        } else {
            None
        };
        let valid_truth = split.valid.items_by_user();
        let mut valid_users = users_with_truth(&valid_truth);
        if config.validation_users > 0 && valid_users.len() > config.validation_users {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.batch_seed, TAG_VALIDATION));
            let picked = rand::seq::index::sample(&mut rng, valid_users.len(), config.validation_users);
            let mut chosen: Vec<u32> = picked.iter().map(|k| valid_users[k]).collect();
            chosen.sort_unstable();
            valid_users = chosen;
        }
        if valid_users.is_empty() {
            log::warn!("validation part is empty; early stopping sees zero scores");
        }
        Ok(Self {
            pooling: Pooling::uniform(config.layers),
            pairs: split.train.pairs(),
            config,
            adj,
            sampler,
            valid_truth,
            train_mask,
            valid_users,
            state,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adj
    }

    pub fn history(&self) -> &[EpochReport] {
        &self.state.history
    }

    pub fn epoch(&self) -> usize {
        self.state.epoch
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.state.table
    }

    /// Best-validation parameters, or the current ones before any epoch.
    pub fn best_table(&self) -> &EmbeddingTable {
        self.state.best.as_ref().map_or(&self.state.table, |b| &b.table)
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.state.best.as_ref().map(|b| b.epoch)
    }

    pub fn memberships(&self) -> Option<&[MembershipSet; 2]> {
        self.state.memberships.as_ref()
    }

    /// Propagated outputs of the best-validation parameters.
    pub fn best_outputs(&self) -> EmbeddingTable {
        output_embeddings(&self.adj, self.best_table(), &self.config)
    }

    /// Writes a checkpoint including the best model's outputs.
    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        save_checkpoint(dir, &self.state, Some(&self.best_outputs()))
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.config.max_epochs || self.state.since_best >= self.config.patience
    }

    /// Validation metrics of the current parameters.
    pub fn validate_current(&self) -> Result<RankingMetrics> {
        let out = output_embeddings(&self.adj, &self.state.table, &self.config);
        self.validation_metrics(out.user.view(), out.item.view())
    }

    fn validation_metrics(&self, users: ArrayView2<f64>, items: ArrayView2<f64>) -> Result<RankingMetrics> {
        let targets = EvalTargets {
            ground_truth: &self.valid_truth,
            mask: &self.train_mask,
        };
        rank_and_score_users(users, items, targets, &self.config.eval_cutoffs, &self.valid_users)
    }

    /// Trains until early stopping or the epoch cap.
    pub fn train(&mut self) -> Result<()> {
        self.train_with(|_, _| Ok(()))
    }

    /// As [`Trainer::train`], calling `after_epoch` once per finished epoch.
    pub fn train_with(&mut self, mut after_epoch: impl FnMut(&Trainer, &EpochReport) -> Result<()>) -> Result<()> {
        while !self.is_finished() {
            let report = self.run_epoch()?;
            after_epoch(self, &report)?;
        }
        Ok(())
    }

    pub fn run_epoch(&mut self) -> Result<EpochReport> {
        let start = Instant::now();
        let epoch = self.state.epoch + 1;
        let batches = minibatch_iter(&self.pairs, self.config.batch_size, epoch, self.config.batch_seed, self.sampler.as_ref())?;
        let mut total = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let mut cache = propagate(&self.adj, &self.state.table, &self.pooling);
            cache.normalize();
            let loss = self.batch_loss(&cache, batch, epoch, b)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            let grads = backprop(&self.adj, &cache, loss.grad_user.view(), loss.grad_item.view());
            adam_step(&mut self.state.table, &grads, &mut self.state.optimizer, self.config.learning_rate);
            if !self.state.table.is_finite() {
                return Err(Error::Diverged { epoch, batch: b });
            }
            total += loss.value;
        }
        let loss = total / batches.len() as f64;

        let out = output_embeddings(&self.adj, &self.state.table, &self.config);
        let metrics = self.validation_metrics(out.user.view(), out.item.view())?;
        let refresh = match self.config.objective {
            Objective::Ncl => Some(self.refresh_learned(&out)?),
            _ => None,
        };

        let score = metrics.ndcg_at(self.config.early_stop_cutoff).expect("validated cutoff");
        let improved = self.state.best.as_ref().map_or(true, |b| score > b.score);
        if improved {
            self.state.best = Some(BestSnapshot {
                epoch,
                score,
                table: self.state.table.clone(),
            });
            self.state.since_best = 0;
        } else {
            self.state.since_best += 1;
        }
        self.state.epoch = epoch;
        let report = EpochReport {
            epoch,
            loss,
            cutoffs: metrics.cutoffs,
            recall: metrics.recall,
            ndcg: metrics.ndcg,
            seconds: start.elapsed().as_secs_f64(),
            refresh,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} ndcg@{} {:.4}{}",
            report.loss,
            self.config.early_stop_cutoff,
            score,
            if improved { " *" } else { "" }
        );
        self.state.history.push(report.clone());
        Ok(report)
    }

    /// Clusters used by one compactness evaluation on `side`: all of them,
    /// or `membership_sample` drawn uniformly. The sampled sum stands in for
    /// the full one unscaled.
    fn active_memberships(&self, side: usize, epoch: usize, batch: usize) -> Result<Cow<'_, MembershipSet>> {
        let full = &self.state.memberships.as_ref().expect("compactness objective")[side];
        let m = self.config.membership_sample;
        if m == 0 || full.num_clusters() <= m {
            return Ok(Cow::Borrowed(full));
        }
        let draw = match self.config.resample {
            Resample::Batch => batch as u64,
            Resample::Epoch => 0,
        };
        let seed = derive_seed(derive_seed(derive_seed(self.config.batch_seed ^ TAG_SAMPLE, epoch as u64), draw), side as u64);
        Ok(Cow::Owned(sample_memberships(full, m, seed)?))
    }

    /// `Rᶜ − R` on one side of a batch.
    fn batch_compactness(&self, e: ArrayView2<f64>, rows: &[u32], side: usize, epoch: usize, batch: usize) -> Result<SideLoss> {
        let set = self.active_memberships(side, epoch, batch)?;
        Ok(compactness_loss(e, self.config.epsilon_sq, &set.restrict(rows))?.loss)
    }

    /// Loss of one batch with gradients on the full output tables.
    fn batch_loss(&self, cache: &ForwardCache, batch: &Batch, epoch: usize, b: usize) -> Result<LossResult> {
        let (out_user, out_item) = cache.output();
        let d = self.config.dim;
        let mut grad_user = Array2::zeros((out_user.nrows(), d));
        let mut grad_item = Array2::zeros((out_item.nrows(), d));
        let pair_users: Vec<u32> = batch.pairs.iter().map(|p| p.0).collect();
        let pair_items: Vec<u32> = batch.pairs.iter().map(|p| p.1).collect();
        let value = match self.config.objective {
            Objective::Infonce => {
                let a = gather(out_user, &pair_users);
                let bv = gather(out_item, &pair_items);
                let l = infonce_loss(a.view(), bv.view(), self.config.tau)?;
                scatter(&l.grad_user, &pair_users, &mut grad_user);
                scatter(&l.grad_item, &pair_items, &mut grad_item);
                l.value
            }
            Objective::Bpr => {
                let mut all_items = pair_items.clone();
                all_items.extend_from_slice(&batch.negatives);
                let (users, lu) = localize(&pair_users);
                let (items, li) = localize(&all_items);
                let n = batch.pairs.len();
                let triples: Vec<(usize, usize, usize)> = (0..n).map(|k| (lu[k], li[k], li[n + k])).collect();
                let mut l = bpr_loss(&triples, gather(out_user, &users).view(), gather(out_item, &items).view());
                let scale = 1.0 / n as f64;
                l.grad_user *= scale;
                l.grad_item *= scale;
                scatter(&l.grad_user, &users, &mut grad_user);
                scatter(&l.grad_item, &items, &mut grad_item);
                l.value * scale
            }
            Objective::Directau | Objective::Nclg | Objective::Ncl => {
                let (users, lu) = localize(&pair_users);
                let (items, li) = localize(&pair_items);
                let pairs: Vec<(usize, usize)> = lu.into_iter().zip(li).collect();
                let eu = gather(out_user, &users);
                let ei = gather(out_item, &items);
                let l = if self.config.objective == Objective::Directau {
                    directau_loss(&pairs, eu.view(), ei.view(), self.config.lambda)?
                } else {
                    let align = alignment_loss(&pairs, eu.view(), ei.view());
                    let cu = self.batch_compactness(eu.view(), &users, 0, epoch, b)?;
                    let ci = self.batch_compactness(ei.view(), &items, 1, epoch, b)?;
                    ncl_total(&align, &cu, &ci, self.config.alpha)?
                };
                scatter(&l.grad_user, &users, &mut grad_user);
                scatter(&l.grad_item, &items, &mut grad_item);
                l.value
            }
        };
        Ok(LossResult {
            value,
            grad_user,
            grad_item,
        })
    }

    /// Self-labeling step on both sides: classifier posteriors, an
    /// equal-partition transport assignment, head updates against it, and
    /// the memberships it induces.
    fn refresh_learned(&mut self, out: &EmbeddingTable) -> Result<RefreshStats> {
        let heads = self.state.heads.as_mut().expect("learned clusters");
        let mut sides = Vec::with_capacity(2);
        let mut sets = Vec::with_capacity(2);
        for (side, e) in [out.user.view(), out.item.view()].into_iter().enumerate() {
            let head = &mut heads[side];
            let p = classifier_forward(e, head);
            let q = ipot_assign(p.view(), &self.config.ipot)?;
            let mut cross_entropy = f64::NAN;
            for step in 0..self.config.classifier_steps {
                let (next, value) = update_classifier(e, &q, head, self.config.classifier_lr)?;
                if step == 0 {
                    cross_entropy = value;
                }
                *head = next;
            }
            let mut set = memberships_from_assignments(&q, self.config.membership_mode)?;
            if self.config.membership_mode == MembershipMode::Soft && self.config.membership_prune > 0.0 {
                set = set.pruned(self.config.membership_prune);
            }
            sides.push(SideRefresh {
                cross_entropy,
                ipot_iterations: q.iterations,
                ipot_converged: q.converged,
                marginal_error: q.marginal_error,
                occupied_clusters: set.clusters.iter().filter(|c| !c.members.is_empty()).count(),
            });
            sets.push(set);
        }
        let item = sets.pop().expect("two sides");
        let user = sets.pop().expect("two sides");
        self.state.memberships = Some([user, item]);
        let item = sides.pop().expect("two sides");
        let user = sides.pop().expect("two sides");
        Ok(RefreshStats { user, item })
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: EmbeddingTable,
    pub best_epoch: usize,
    pub history: Vec<EpochReport>,
}

/// Trains from scratch and returns the best-validation snapshot.
pub fn train(config: TrainConfig, split: &SplitDataset) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config, split)?;
    t.train()?;
    Ok(TrainOutcome {
        best: t.best_table().clone(),
        best_epoch: t.best_epoch().unwrap_or(0),
        history: t.state.history,
    })
}
