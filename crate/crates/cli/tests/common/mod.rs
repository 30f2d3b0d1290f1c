#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nocollapse_cli::commands::{cmd_prepare, cmd_synthesize, PrepareArgs, SynthesizeArgs};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nocollapse"));
    c.env_remove(nocollapse_cli::SEED_ENV).env("RUST_LOG", "warn");
    c
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

/// Synthesizes a planted-block file and prepares it into `<dir>/data`.
pub fn block_snapshot(dir: &Path, users: usize, items: usize, blocks: usize, p_within: f64, p_across: f64, seed: u64) -> PathBuf {
    let raw = dir.join("blocks.tsv");
    cmd_synthesize(&SynthesizeArgs {
        out: raw.clone(),
        users,
        items,
        blocks,
        p_within,
        p_across,
        seed,
    })
    .unwrap();
    let data = dir.join("data");
    cmd_prepare(&PrepareArgs {
        input: raw,
        format: "tsv".into(),
        k_core: None,
        split: "0.8,0.1,0.1".into(),
        seed,
        out: data.clone(),
    })
    .unwrap();
    data
}

/// A run config over `data` with a `[train]` table given as TOML lines.
pub fn write_config(dir: &Path, name: &str, data: &Path, train: &str) -> PathBuf {
    let path = dir.join(format!("{name}.toml"));
    let body = format!(
        "name = {name:?}\ndata_dir = {:?}\nreport_dir = {:?}\n\n[train]\n{train}\n",
        data.display().to_string(),
        dir.join("runs").join(name).display().to_string()
    );
    fs::write(&path, body).unwrap();
    path
}

/// Training options small enough for a test.
pub const TINY: &str = "dim = 8\nlayers = 2\nbatch_size = 128\nlearning_rate = 0.01\nclusters_user = 4\nclusters_item = 4\neval_cutoffs = [5, 10]\nearly_stop_cutoff = 5\nmax_epochs = 4\npatience = 50";
