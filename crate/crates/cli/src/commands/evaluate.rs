use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nocollapse_core::dataset::{build_adjacency, Part};
use nocollapse_core::evaluator::{degree_bucket_eval, rank_and_score, BucketMetrics, EvalTargets, RankingMetrics};
use nocollapse_core::trainer::{load_best_embeddings, load_checkpoint_config, masked_targets, output_embeddings};
use serde_json::{json, Value};

use super::train::load_split;
use crate::error::{io_failure, CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalPart {
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset snapshot the checkpoint was trained on.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Comma-separated cutoffs; defaults to the run's `eval_cutoffs`.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Vec<usize>,
    /// Ascending item-degree edges, e.g. `0,100,200,300,400`.
    #[arg(long, value_delimiter = ',')]
    pub degree_buckets: Vec<u32>,
    #[arg(long, value_enum, default_value = "test")]
    pub part: EvalPart,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    /// Report file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Overall metrics plus the optional per-bucket section.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub part: Part,
    pub overall: RankingMetrics,
    pub buckets: Option<Vec<BucketMetrics>>,
}

impl Evaluation {
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "part": self.part.as_str(),
            "users": self.overall.users,
            "metrics": self.overall.to_json(),
        });
        if let Some(buckets) = &self.buckets {
            v["buckets"] = buckets
                .iter()
                .map(|b| {
                    json!({
                        "lo": b.lo,
                        "hi": b.hi,
                        "items": b.items,
                        "interactions": b.interactions,
                        "users": b.metrics.as_ref().map(|m| m.users),
                        "metrics": b.metrics.as_ref().map(RankingMetrics::to_json),
                    })
                })
                .collect();
        }
        v
    }

    /// `scope,cutoff,recall,ndcg` with `scope` either `all` or `[lo,hi)`.
    /// Empty buckets get empty metric fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scope,cutoff,recall,ndcg\n");
        let rows = |s: &mut String, scope: &str, m: &RankingMetrics| {
            for (k, c) in m.cutoffs.iter().enumerate() {
                writeln!(s, "{scope},{c},{},{}", m.recall[k], m.ndcg[k]).unwrap();
            }
        };
        rows(&mut s, "all", &self.overall);
        for b in self.buckets.iter().flatten() {
            let scope = format!("\"[{},{})\"", b.lo, b.hi);
            match &b.metrics {
                Some(m) => rows(&mut s, &scope, m),
                None => {
                    for c in &self.overall.cutoffs {
                        writeln!(s, "{scope},{c},,").unwrap();
                    }
                }
            }
        }
        s
    }
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<Evaluation> {
    if !args.checkpoint.is_dir() {
        return Err(Failure::usage(format!("checkpoint {} does not exist", args.checkpoint.display())));
    }
    let config = load_checkpoint_config(&args.checkpoint)?;
    let table = load_best_embeddings(&args.checkpoint)?;
    let split = load_split(&args.snapshot)?;
    if table.num_users() != split.num_users() || table.num_items() != split.num_items() {
        return Err(Failure::usage(format!(
            "checkpoint has {}×{} embeddings but the snapshot has {} users and {} items",
            table.num_users(),
            table.num_items(),
            split.num_users(),
            split.num_items()
        )));
    }
    let cutoffs = if args.cutoffs.is_empty() { config.eval_cutoffs.clone() } else { args.cutoffs.clone() };
    let adj = build_adjacency(&split.train)?;
    let out = output_embeddings(&adj, &table, &config);
    let (part, mask_valid) = match args.part {
        EvalPart::Valid => (Part::Valid, false),
        EvalPart::Test => (Part::Test, true),
    };
    let (gt, mask) = masked_targets(&split, part, mask_valid);
    let targets = EvalTargets {
        ground_truth: &gt,
        mask: &mask,
    };
    let overall = rank_and_score(out.user.view(), out.item.view(), targets, &cutoffs)?;
    let buckets = if args.degree_buckets.is_empty() {
        None
    } else {
        let degree = split.train.item_degrees();
        Some(degree_bucket_eval(out.user.view(), out.item.view(), targets, &cutoffs, &degree, &args.degree_buckets)?)
    };
    Ok(Evaluation { part, overall, buckets })
}

pub(crate) fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, body).map_err(|e| io_failure(p, e)),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<Evaluation> {
    let eval = evaluate(args)?;
    let body = match args.format {
        ReportFormat::Json => serde_json::to_string_pretty(&eval.to_json()).unwrap() + "\n",
        ReportFormat::Csv => eval.to_csv(),
    };
    emit(args.out.as_deref(), &body)?;
    Ok(eval)
}
