use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use nocollapse_core::dataset::{Part, SplitDataset};
use nocollapse_core::evaluator::{rank_and_score, EvalTargets, RankingMetrics};
use nocollapse_core::snapshot::read_snapshot;
use nocollapse_core::trainer::{load_checkpoint, masked_targets};
use nocollapse_core::{EpochReport, TrainConfig, Trainer};
use serde_json::json;

use crate::config::{env_seed, RunConfig};
use crate::error::{io_failure, CliResult, Failure};

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config entry, e.g. `--set alpha=0.1` or
    /// `--set train.ipot.beta=0.5`. Repeatable; wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Continue from the run's checkpoint.
    #[arg(long)]
    pub resume: bool,
}

/// What a finished `train` invocation produced.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub report_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub test: RankingMetrics,
}

pub const HISTORY_FILE: &str = "history.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFIG_FILE: &str = "config.toml";

/// `epoch,loss,recall@n...,ndcg@n...`. Wall-clock time lives in
/// `timings.csv` so this file is reproducible byte for byte.
pub fn history_csv(history: &[EpochReport], cutoffs: &[usize]) -> String {
    let mut s = String::from("epoch,loss");
    for c in cutoffs {
        write!(s, ",recall@{c}").unwrap();
    }
    for c in cutoffs {
        write!(s, ",ndcg@{c}").unwrap();
    }
    s.push('\n');
    for r in history {
        write!(s, "{},{}", r.epoch, r.loss).unwrap();
        for v in r.recall.iter().chain(&r.ndcg) {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn timings_csv(history: &[EpochReport]) -> String {
    let mut s = String::from("epoch,seconds\n");
    for r in history {
        writeln!(s, "{},{:.3}", r.epoch, r.seconds).unwrap();
    }
    s
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    fs::write(path, body).map_err(|e| io_failure(path, e))
}

/// Trainer options that may differ between an interrupted run and its
/// continuation.
fn resumable(a: &TrainConfig, b: &TrainConfig) -> bool {
    let strip = |c: &TrainConfig| TrainConfig {
        max_epochs: 0,
        patience: 0,
        ..c.clone()
    };
    strip(a) == strip(b)
}

pub fn load_split(data_dir: &Path) -> CliResult<SplitDataset> {
    if !data_dir.is_dir() {
        return Err(Failure::usage(format!("dataset snapshot {} does not exist", data_dir.display())));
    }
    Ok(read_snapshot(data_dir)?.0)
}

pub fn test_metrics(split: &SplitDataset, trainer: &Trainer) -> CliResult<RankingMetrics> {
    let out = trainer.best_outputs();
    let (gt, mask) = masked_targets(split, Part::Test, true);
    Ok(rank_and_score(
        out.user.view(),
        out.item.view(),
        EvalTargets {
            ground_truth: &gt,
            mask: &mask,
        },
        &trainer.config().eval_cutoffs,
    )?)
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainSummary> {
    let mut config = RunConfig::load(&args.config, &args.overrides, env_seed()?)?;
    if let Some(m) = args.max_epochs {
        if m == 0 {
            return Err(Failure::usage("--max-epochs must be positive"));
        }
        config.train.max_epochs = m;
    }
    let split = load_split(&config.data_dir)?;
    let report_dir = config.report_dir();
    let ck = config.checkpoint_dir();
    fs::create_dir_all(&report_dir).map_err(|e| io_failure(&report_dir, e))?;

    let mut trainer = if args.resume {
        if !ck.join("state.json").is_file() {
            return Err(Failure::usage(format!("--resume: no checkpoint in {}", ck.display())));
        }
        let mut state = load_checkpoint(&ck)?;
        if !resumable(&state.config, &config.train) {
            return Err(Failure::usage(format!(
                "--resume: training options differ from the checkpoint in {}",
                ck.display()
            )));
        }
        state.config.max_epochs = config.train.max_epochs;
        state.config.patience = config.train.patience;
        log::info!("resuming {} after epoch {}", config.name, state.epoch);
        Trainer::resume(state, &split)?
    } else {
        Trainer::new(config.train.clone(), &split)?
    };
    write_file(&report_dir.join(CONFIG_FILE), &config.to_toml())?;

    let cutoffs = config.train.eval_cutoffs.clone();
    let history_path = report_dir.join(HISTORY_FILE);
    let timings_path = report_dir.join(TIMINGS_FILE);
    let result = trainer.train_with(|t, _| {
        t.save(&ck)?;
        fs::write(&history_path, history_csv(t.history(), &cutoffs)).map_err(|e| nocollapse_core::Error::Io {
            path: history_path.clone(),
            source: e,
        })?;
        fs::write(&timings_path, timings_csv(t.history())).map_err(|e| nocollapse_core::Error::Io {
            path: timings_path.clone(),
            source: e,
        })?;
        Ok(())
    });
    if let Err(e) = result {
        return Err(Failure::runtime(format!("training {} stopped: {e}", config.name)));
    }
    // A resumed run that was already finished still gets its reports.
    write_file(&history_path, &history_csv(trainer.history(), &cutoffs))?;
    write_file(&timings_path, &timings_csv(trainer.history()))?;
    if trainer.history().is_empty() {
        trainer.save(&ck)?;
    }

    let test = test_metrics(&split, &trainer)?;
    let best_epoch = trainer.best_epoch();
    let best_valid = best_epoch.map(|e| trainer.history()[e - 1].clone());
    let report = json!({
        "name": config.name,
        "objective": config.train.objective.as_str(),
        "epochs": trainer.epoch(),
        "best_epoch": best_epoch,
        "validation": best_valid.map(|r| {
            RankingMetrics { cutoffs: r.cutoffs, recall: r.recall, ndcg: r.ndcg, users: 0 }.to_json()
        }),
        "test": test.to_json(),
    });
    write_file(&report_dir.join(METRICS_FILE), &(serde_json::to_string_pretty(&report).unwrap() + "\n"))?;
    Ok(TrainSummary {
        report_dir,
        checkpoint_dir: ck,
        epochs: trainer.epoch(),
        best_epoch,
        test,
    })
}
