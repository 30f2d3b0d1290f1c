use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clustering::{IpotConfig, MembershipMode, Threshold};
use crate::error::{Error, Result};
use crate::objectives::RateParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Pairwise ranking loss on raw pooled embeddings, one sampled negative
    /// per positive.
    Bpr,
    /// In-batch softmax contrast between users and their positive items.
    Infonce,
    /// Alignment plus uniformity.
    Directau,
    /// Alignment plus compactness with co-occurrence clusters.
    Nclg,
    /// Alignment plus compactness with self-labeled clusters.
    Ncl,
}

impl Objective {
    pub const ALL: [Objective; 5] = [Objective::Bpr, Objective::Infonce, Objective::Directau, Objective::Nclg, Objective::Ncl];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Bpr => "bpr",
            Objective::Infonce => "infonce",
            Objective::Directau => "directau",
            Objective::Nclg => "nclg",
            Objective::Ncl => "ncl",
        }
    }

    pub fn needs_negatives(self) -> bool {
        matches!(self, Objective::Bpr)
    }

    pub fn uses_compactness(self) -> bool {
        matches!(self, Objective::Nclg | Objective::Ncl)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown objective {s:?} (expected bpr|infonce|directau|nclg|ncl)")))
    }
}

/// When sampled cluster subsets are redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    Batch,
    Epoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub dim: usize,
    /// Propagation depth `L`.
    pub layers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Standard deviation of the Gaussian initialization.
    pub init_scale: f64,
    pub epsilon_sq: f64,
    pub alpha: f64,
    pub tau: f64,
    /// Uniformity weight of the alignment/uniformity baseline.
    pub lambda: f64,
    pub clusters_user: usize,
    pub clusters_item: usize,
    pub membership_mode: MembershipMode,
    /// Soft weights below this are dropped after each refresh.
    pub membership_prune: f64,
    /// Clusters sampled per compactness evaluation; 0 uses all of them.
    pub membership_sample: usize,
    pub resample: Resample,
    pub threshold: Threshold,
    /// Upper bound on stored co-occurrence entries.
    pub cooccurrence_cap: usize,
    pub classifier_steps: usize,
    pub classifier_lr: f64,
    pub ipot: IpotConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub init_seed: u64,
    pub batch_seed: u64,
    pub eval_cutoffs: Vec<usize>,
    /// Early stopping tracks NDCG at this cutoff.
    pub early_stop_cutoff: usize,
    /// Validation users scored per epoch; 0 scores all of them.
    pub validation_users: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let rate = RateParams::default();
        Self {
            objective: Objective::Ncl,
            dim: 64,
            layers: 2,
            batch_size: 2048,
            learning_rate: 1e-3,
            init_scale: 0.1,
            epsilon_sq: rate.epsilon_sq,
            alpha: rate.alpha,
            tau: rate.tau,
            lambda: rate.lambda,
            clusters_user: 300,
            clusters_item: 300,
            membership_mode: MembershipMode::Soft,
            membership_prune: 1e-3,
            membership_sample: 50,
            resample: Resample::Batch,
            threshold: Threshold::Quantile(0.9),
            cooccurrence_cap: 200_000_000,
            classifier_steps: 10,
            classifier_lr: 1.0,
            ipot: IpotConfig::default(),
            max_epochs: 300,
            patience: 10,
            init_seed: 0,
            batch_seed: 0,
            eval_cutoffs: vec![10, 20, 50],
            early_stop_cutoff: 10,
            validation_users: 5000,
        }
    }
}

impl TrainConfig {
    pub fn rate_params(&self) -> RateParams {
        RateParams {
            epsilon_sq: self.epsilon_sq,
            alpha: self.alpha,
            tau: self.tau,
            lambda: self.lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("invalid training config: {what}")));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return bad("max_epochs and patience must be positive");
        }
        if self.eval_cutoffs.is_empty() || self.eval_cutoffs.windows(2).any(|w| w[0] >= w[1]) || self.eval_cutoffs[0] == 0 {
            return bad("eval_cutoffs must be positive and strictly ascending");
        }
        if !self.eval_cutoffs.contains(&self.early_stop_cutoff) {
            return bad("early_stop_cutoff must be one of eval_cutoffs");
        }
        match self.objective {
            Objective::Infonce if !(self.tau > 0.0) => return bad("tau must be positive"),
            Objective::Directau if !(self.lambda >= 0.0) => return bad("lambda must be non-negative"),
            Objective::Nclg | Objective::Ncl => {
                self.rate_params().validate()?;
                if !(self.alpha > 0.0) {
                    return bad("alpha must be positive");
                }
                if !(self.membership_prune >= 0.0 && self.membership_prune < 1.0) {
                    return bad("membership_prune must lie in [0, 1)");
                }
            }
            _ => {}
        }
        if self.objective == Objective::Nclg {
            match self.threshold {
                Threshold::Absolute(v) if !(v > 0.0) => return bad("absolute threshold must be positive"),
                Threshold::Quantile(q) if !(q > 0.0 && q <= 1.0) => return bad("quantile threshold must lie in (0, 1]"),
                _ => {}
            }
        }
        if self.objective == Objective::Ncl {
            if self.clusters_user < 2 || self.clusters_item < 2 {
                return bad("cluster counts must be at least 2");
            }
            if self.membership_mode == MembershipMode::Indicator {
                return bad("learned clusters are hard or soft");
            }
            if !(self.classifier_lr >= 0.0) {
                return bad("classifier_lr must be non-negative");
            }
        }
        Ok(())
    }
}
