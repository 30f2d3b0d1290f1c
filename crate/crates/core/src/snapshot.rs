//! On-disk layout of a prepared dataset.
//!
//! A snapshot directory holds:
//!
//! * `interactions.txt`: one `user<TAB>item<TAB>part` line per record, with
//!   contiguous indices and `part` in `train|valid|test`;
//! * `users.txt`, `items.txt`: raw identifiers, line `n` naming index `n`;
//! * `split.json`: the [`Manifest`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{IdMap, Interaction, InteractionSet, Part, SplitDataset};
use crate::error::{Error, Result};

pub const INTERACTIONS_FILE: &str = "interactions.txt";
pub const USERS_FILE: &str = "users.txt";
pub const ITEMS_FILE: &str = "items.txt";
pub const MANIFEST_FILE: &str = "split.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub source: String,
    pub k_core: usize,
    pub ratios: [f64; 3],
    pub seed: u64,
    pub num_users: usize,
    pub num_items: usize,
    pub num_train: usize,
    pub num_valid: usize,
    pub num_test: usize,
}

impl Manifest {
    pub fn describe(split: &SplitDataset, source: &str, k_core: usize, ratios: [f64; 3]) -> Self {
        Self {
            source: source.to_owned(),
            k_core,
            ratios,
            seed: split.split_seed,
            num_users: split.num_users(),
            num_items: split.num_items(),
            num_train: split.train.len(),
            num_valid: split.valid.len(),
            num_test: split.test.len(),
        }
    }
}

pub fn write_snapshot(dir: &Path, split: &SplitDataset, manifest: &Manifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut body = String::new();
    for (part, set) in [(Part::Train, &split.train), (Part::Valid, &split.valid), (Part::Test, &split.test)] {
        for r in &set.records {
            writeln!(body, "{}\t{}\t{}", r.user, r.item, part.as_str()).unwrap();
        }
    }
    write(dir, INTERACTIONS_FILE, &body)?;
    write(dir, USERS_FILE, &lines(split.train.user_ids.raw_ids()))?;
    write(dir, ITEMS_FILE, &lines(split.train.item_ids.raw_ids()))?;
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    write(dir, MANIFEST_FILE, &json)
}

pub fn read_snapshot(dir: &Path) -> Result<(SplitDataset, Manifest)> {
    let manifest: Manifest = serde_json::from_str(&read(dir, MANIFEST_FILE)?)?;
    let user_ids = IdMap::from_raw(read(dir, USERS_FILE)?.lines().map(str::to_owned).collect())?;
    let item_ids = IdMap::from_raw(read(dir, ITEMS_FILE)?.lines().map(str::to_owned).collect())?;
    let path = dir.join(INTERACTIONS_FILE);
    let text = read(dir, INTERACTIONS_FILE)?;
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let bad = |message: String| Error::Parse {
            path: path.clone(),
            line: n + 1,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", f.len())));
        }
        let user: u32 = f[0].parse().map_err(|_| bad(format!("bad user index {:?}", f[0])))?;
        let item: u32 = f[1].parse().map_err(|_| bad(format!("bad item index {:?}", f[1])))?;
        if user as usize >= user_ids.len() || item as usize >= item_ids.len() {
            return Err(bad("index out of range".into()));
        }
        let rec = Interaction {
            user,
            item,
            timestamp: None,
        };
        match f[2] {
            "train" => train.push(rec),
            "valid" => valid.push(rec),
            "test" => test.push(rec),
            other => return Err(bad(format!("unknown part {other:?}"))),
        }
    }
    let mk = |recs| InteractionSet::with_id_space(recs, user_ids.clone(), item_ids.clone());
    let split = SplitDataset {
        train: mk(train),
        valid: mk(valid),
        test: mk(test),
        split_seed: manifest.seed,
    };
    Ok((split, manifest))
}

fn lines(items: &[String]) -> String {
    let mut s = items.join("\n");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, body).map_err(|e| Error::io(p, e))
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|e| Error::io(p, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split_per_user;
    use crate::synthetic::{planted_blocks, BlockSpec};

    #[test]
    fn snapshot_roundtrip() {
        let spec = BlockSpec {
            users: 40,
            items: 30,
            ..BlockSpec::default()
        };
        let set = planted_blocks(&spec, 2);
        let split = split_per_user(&set, (0.8, 0.1, 0.1), 5).unwrap();
        let manifest = Manifest::describe(&split, "synthetic", 1, [0.8, 0.1, 0.1]);
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(dir.path(), &split, &manifest).unwrap();
        let (back, m) = read_snapshot(dir.path()).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(back.train.pairs(), split.train.pairs());
        assert_eq!(back.valid.pairs(), split.valid.pairs());
        assert_eq!(back.test.pairs(), split.test.pairs());
        assert_eq!(back.train.user_ids, split.train.user_ids);
    }
}
