use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ndarray::Array2;
use nocollapse_core::diagnostics::{embedding_spectrum, SpectrumReport, DEFAULT_THRESHOLDS};
use nocollapse_core::encoder::normalize_rows;
use nocollapse_core::trainer::read_matrix;

use crate::error::{io_failure, CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    User,
    Item,
}

impl SideArg {
    pub fn as_str(self) -> &'static str {
        match self {
            SideArg::User => "user",
            SideArg::Item => "item",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "user")]
    pub side: SideArg,
    /// Comma-separated thresholds for the collapsed-dimension counts.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Output directory for `spectrum_<side>.csv` and `spectrum_<side>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Embeddings of one side: the stored propagated outputs when present, the
/// best layer-0 table otherwise.
pub fn side_embeddings(args: &SpectrumArgs) -> CliResult<Array2<f64>> {
    if !args.checkpoint.is_dir() {
        return Err(Failure::usage(format!("checkpoint {} does not exist", args.checkpoint.display())));
    }
    let side = args.side.as_str();
    let output = args.checkpoint.join(format!("output_{side}.bin"));
    let path = if output.is_file() { output } else { args.checkpoint.join(format!("{side}.bin")) };
    if !path.is_file() {
        return Err(Failure::usage(format!("checkpoint {} has no {side} embeddings", args.checkpoint.display())));
    }
    Ok(read_matrix(&path)?)
}

/// Spectrum of the covariance of the side's unit-normalized embeddings.
pub fn cmd_spectrum(args: &SpectrumArgs) -> CliResult<SpectrumReport> {
    let e = side_embeddings(args)?;
    let unit = normalize_rows(e.view());
    if !unit.zero_rows().is_empty() {
        log::warn!("{} zero {} rows left unnormalized", unit.zero_rows().len(), args.side.as_str());
    }
    let thresholds = if args.thresholds.is_empty() { DEFAULT_THRESHOLDS.to_vec() } else { args.thresholds.clone() };
    let report = embedding_spectrum(unit.rows.view(), &thresholds)?;
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let side = args.side.as_str();
    let csv = args.out.join(format!("spectrum_{side}.csv"));
    fs::write(&csv, report.to_csv()).map_err(|e| io_failure(&csv, e))?;
    let json = args.out.join(format!("spectrum_{side}.json"));
    let body = serde_json::to_string_pretty(&report.summary_json()).unwrap() + "\n";
    fs::write(&json, body).map_err(|e| io_failure(&json, e))?;
    Ok(report)
}
