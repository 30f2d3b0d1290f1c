use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use nocollapse_core::dataset::{apply_k_core, load_interactions, split_per_user, Format};
use nocollapse_core::snapshot::{write_snapshot, Manifest};
use nocollapse_core::synthetic::{planted_blocks, BlockSpec};

use crate::config::SEED_ENV;
use crate::error::{io_failure, CliResult, Failure};

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    /// Interaction file: `user item [rating] [timestamp]` per line.
    #[arg(long)]
    pub input: PathBuf,
    /// tsv (any whitespace) or csv.
    #[arg(long, default_value = "tsv")]
    pub format: String,
    /// Keep only users and items with at least this many interactions.
    #[arg(long)]
    pub k_core: Option<usize>,
    /// Per-user train,valid,test ratios.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Snapshot directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_ratios(s: &str) -> CliResult<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::usage(format!("--split {s:?}: expected three comma-separated numbers")))?;
    <[f64; 3]>::try_from(parts).map_err(|_| Failure::usage(format!("--split {s:?}: expected three ratios")))
}

pub fn cmd_prepare(args: &PrepareArgs) -> CliResult<Manifest> {
    let format: Format = args.format.parse()?;
    let ratios = parse_ratios(&args.split)?;
    if !args.input.exists() {
        return Err(Failure::usage(format!("input file {} does not exist", args.input.display())));
    }
    let mut set = load_interactions(&args.input, format)?;
    log::info!("loaded {} interactions ({} users, {} items)", set.len(), set.num_users, set.num_items);
    let k = args.k_core.unwrap_or(1);
    if k > 1 {
        set = apply_k_core(&set, k)?;
        log::info!("{k}-core: {} interactions ({} users, {} items)", set.len(), set.num_users, set.num_items);
    }
    let split = split_per_user(&set, (ratios[0], ratios[1], ratios[2]), args.seed)?;
    let manifest = Manifest::describe(&split, &args.input.display().to_string(), k, ratios);
    write_snapshot(&args.out, &split, &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Args)]
pub struct SynthesizeArgs {
    /// Interaction file to write (`user<TAB>item` lines).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 600)]
    pub users: usize,
    #[arg(long, default_value_t = 400)]
    pub items: usize,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0.2)]
    pub p_within: f64,
    #[arg(long, default_value_t = 0.005)]
    pub p_across: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
}

/// Writes a planted-block interaction file.
pub fn cmd_synthesize(args: &SynthesizeArgs) -> CliResult<usize> {
    let spec = BlockSpec {
        users: args.users,
        items: args.items,
        blocks: args.blocks,
        p_within: args.p_within,
        p_across: args.p_across,
    };
    if spec.blocks == 0 || spec.users < spec.blocks || spec.items < spec.blocks {
        return Err(Failure::usage("need at least one user and one item per block"));
    }
    if !(0.0..=1.0).contains(&spec.p_within) || !(0.0..=1.0).contains(&spec.p_across) {
        return Err(Failure::usage("probabilities must lie in [0, 1]"));
    }
    let set = planted_blocks(&spec, args.seed);
    let mut body = String::new();
    for r in &set.records {
        writeln!(body, "{}\t{}", set.user_ids.raw(r.user), set.item_ids.raw(r.item)).unwrap();
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    fs::write(&args.out, body).map_err(|e| io_failure(&args.out, e))?;
    Ok(set.len())
}
