//! Checkpoint directory layout:
//!
//! * `state.json`: config, epoch counters, Adam scalars, best epoch/score,
//!   history and classifier heads;
//! * `user.bin`, `item.bin`: best-validation embedding tables;
//! * `output_user.bin`, `output_item.bin`: the best tables propagated
//!   through the graph (and normalized when the objective scores unit
//!   vectors), i.e. the vectors that are ranked and analyzed;
//! * `current_user.bin`, `current_item.bin`, `adam_{m,v}_{user,item}.bin`:
//!   the live parameters and moments, for resuming;
//! * `memberships_{user,item}.tsv`: current clusters (objectives with a
//!   compactness term only), a `# clusters K mode M entities N` header then
//!   `entity<TAB>cluster<TAB>weight` lines.
//!
//! Matrices use a small binary format: the 8 bytes `NCMATF64`, rows and
//! columns as little-endian `u64`, then row-major little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{BestSnapshot, EpochReport, Moments, OptimizerState, TrainConfig, TrainerState};
use crate::clustering::{ClassifierHead, Cluster, MembershipMode, MembershipSet};
use crate::encoder::EmbeddingTable;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NCMATF64";
const STATE_FILE: &str = "state.json";
const FORMAT_VERSION: u32 = 1;

pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * m.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Checkpoint(format!("{}: {what}", path.display()));
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(bad("not a matrix file"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) != Some(bytes.len() - 24) {
        return Err(bad("size does not match the header"));
    }
    let data = bytes[24..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(&e.to_string()))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    version: u32,
    config: TrainConfig,
    epoch: usize,
    adam_step: u64,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
    best_epoch: Option<usize>,
    best_score: Option<f64>,
    since_best: usize,
    history: Vec<EpochReport>,
    heads: Option<[ClassifierHead; 2]>,
}

const SIDES: [&str; 2] = ["user", "item"];

fn membership_text(m: &MembershipSet) -> String {
    let mode = match m.mode {
        MembershipMode::Hard => "hard",
        MembershipMode::Soft => "soft",
        MembershipMode::Indicator => "indicator",
    };
    format!("# clusters {} mode {mode} entities {}\n{}", m.num_clusters(), m.num_entities, m.to_text())
}

fn parse_memberships(path: &Path) -> Result<MembershipSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: &str| Error::Parse {
        path: path.to_owned(),
        line,
        message: message.to_owned(),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    let (k, mode, n) = match header.as_slice() {
        ["#", "clusters", k, "mode", mode, "entities", n] => (*k, *mode, *n),
        _ => return Err(bad(1, "missing membership header")),
    };
    let k: usize = k.parse().map_err(|_| bad(1, "bad cluster count"))?;
    let n: usize = n.parse().map_err(|_| bad(1, "bad entity count"))?;
    let mode = match mode {
        "hard" => MembershipMode::Hard,
        "soft" => MembershipMode::Soft,
        "indicator" => MembershipMode::Indicator,
        _ => return Err(bad(1, "unknown mode")),
    };
    let mut clusters = vec![Cluster { members: Vec::new() }; k];
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        let parsed = match f.as_slice() {
            [e, c, w] => e.parse::<u32>().ok().zip(c.parse::<usize>().ok()).zip(w.parse::<f64>().ok()),
            _ => None,
        };
        let ((e, c), w) = parsed.ok_or_else(|| bad(i + 2, "expected entity, cluster, weight"))?;
        if c >= k || e as usize >= n {
            return Err(bad(i + 2, "index out of range"));
        }
        clusters[c].members.push((e, w));
    }
    Ok(MembershipSet {
        num_entities: n,
        clusters,
        mode,
    })
}

/// Writes `state` into `dir`, replacing any previous checkpoint there. Files
/// are staged in a sibling directory and swapped in so an interrupted write
/// leaves the previous checkpoint intact.
pub fn save_checkpoint(dir: &Path, state: &TrainerState, outputs: Option<&EmbeddingTable>) -> Result<()> {
    let staging = dir.with_extension("partial");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let best = state.best.as_ref().map_or(&state.table, |b| &b.table);
    write_matrix(&staging.join("user.bin"), &best.user)?;
    write_matrix(&staging.join("item.bin"), &best.item)?;
    if let Some(out) = outputs {
        write_matrix(&staging.join("output_user.bin"), &out.user)?;
        write_matrix(&staging.join("output_item.bin"), &out.item)?;
    }
    write_matrix(&staging.join("current_user.bin"), &state.table.user)?;
    write_matrix(&staging.join("current_item.bin"), &state.table.item)?;
    for (side, m) in SIDES.iter().zip([&state.optimizer.user, &state.optimizer.item]) {
        write_matrix(&staging.join(format!("adam_m_{side}.bin")), &m.m)?;
        write_matrix(&staging.join(format!("adam_v_{side}.bin")), &m.v)?;
    }
    if let Some(sets) = &state.memberships {
        for (side, m) in SIDES.iter().zip(sets) {
            let p = staging.join(format!("memberships_{side}.tsv"));
            fs::write(&p, membership_text(m)).map_err(|e| Error::io(p, e))?;
        }
    }
    let file = StateFile {
        version: FORMAT_VERSION,
        config: state.config.clone(),
        epoch: state.epoch,
        adam_step: state.optimizer.step,
        adam_beta1: state.optimizer.beta1,
        adam_beta2: state.optimizer.beta2,
        adam_eps: state.optimizer.eps,
        best_epoch: state.best.as_ref().map(|b| b.epoch),
        best_score: state.best.as_ref().map(|b| b.score),
        since_best: state.since_best,
        history: state.history.clone(),
        heads: state.heads.clone(),
    };
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    let p = staging.join(STATE_FILE);
    fs::write(&p, json).map_err(|e| Error::io(p, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainerState> {
    let p = dir.join(STATE_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let file: StateFile = serde_json::from_str(&text)?;
    if file.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", file.version)));
    }
    let table = EmbeddingTable {
        user: read_matrix(&dir.join("current_user.bin"))?,
        item: read_matrix(&dir.join("current_item.bin"))?,
    };
    let moments = |side: &str| -> Result<Moments> {
        Ok(Moments {
            m: read_matrix(&dir.join(format!("adam_m_{side}.bin")))?,
            v: read_matrix(&dir.join(format!("adam_v_{side}.bin")))?,
        })
    };
    let optimizer = OptimizerState {
        user: moments("user")?,
        item: moments("item")?,
        step: file.adam_step,
        beta1: file.adam_beta1,
        beta2: file.adam_beta2,
        eps: file.adam_eps,
    };
    let best = match (file.best_epoch, file.best_score) {
        (Some(epoch), Some(score)) => Some(BestSnapshot {
            epoch,
            score,
            table: load_best_embeddings(dir)?,
        }),
        _ => None,
    };
    let memberships = if file.config.objective.uses_compactness() {
        Some([
            parse_memberships(&dir.join("memberships_user.tsv"))?,
            parse_memberships(&dir.join("memberships_item.tsv"))?,
        ])
    } else {
        None
    };
    Ok(TrainerState {
        config: file.config,
        epoch: file.epoch,
        table,
        optimizer,
        heads: file.heads,
        memberships,
        best,
        since_best: file.since_best,
        history: file.history,
    })
}

/// The best-validation tables of a checkpoint.
pub fn load_best_embeddings(dir: &Path) -> Result<EmbeddingTable> {
    let table = EmbeddingTable {
        user: read_matrix(&dir.join("user.bin"))?,
        item: read_matrix(&dir.join("item.bin"))?,
    };
    if table.user.ncols() != table.item.ncols() {
        return Err(Error::Checkpoint("user and item tables differ in dimension".into()));
    }
    Ok(table)
}

/// Config stored alongside a checkpoint.
pub fn load_checkpoint_config(dir: &Path) -> Result<TrainConfig> {
    let p = dir.join(STATE_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let file: StateFile = serde_json::from_str(&text)?;
    Ok(file.config)
}

/// The propagated best-model embeddings of a checkpoint.
pub fn load_output_embeddings(dir: &Path) -> Result<EmbeddingTable> {
    let table = EmbeddingTable {
        user: read_matrix(&dir.join("output_user.bin"))?,
        item: read_matrix(&dir.join("output_item.bin"))?,
    };
    if table.user.ncols() != table.item.ncols() {
        return Err(Error::Checkpoint("user and item outputs differ in dimension".into()));
    }
    Ok(table)
}
