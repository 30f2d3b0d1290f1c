//! Interaction ingestion, k-core filtering, per-user splitting and the
//! symmetric-normalized bipartite adjacency.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use log::warn;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One implicit-feedback record over contiguous indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub timestamp: Option<i64>,
}

/// Bijection between raw identifiers and contiguous indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_raw(raw: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(raw.len());
        for (i, r) in raw.iter().enumerate() {
            if index.insert(r.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate raw id {r:?}")));
            }
        }
        Ok(Self { raw, index })
    }

    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&idx) = self.index.get(raw) {
            return idx;
        }
        let idx = self.raw.len() as u32;
        self.raw.push(raw.to_owned());
        self.index.insert(raw.to_owned(), idx);
        idx
    }

    pub fn get(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, idx: u32) -> &str {
        &self.raw[idx as usize]
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Keeps the entries flagged in `keep`, preserving order. Returns the new
    /// map and the old-index → new-index table.
    fn retain(&self, keep: &[bool]) -> (IdMap, Vec<Option<u32>>) {
        let mut out = IdMap::new();
        let remap = self
            .raw
            .iter()
            .zip(keep)
            .map(|(r, &k)| k.then(|| out.intern(r)))
            .collect();
        (out, remap)
    }
}

/// Deduplicated interaction records with contiguous user/item id spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSet {
    pub num_users: usize,
    pub num_items: usize,
    pub records: Vec<Interaction>,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
}

impl InteractionSet {
    /// Interns raw ids in order of first appearance and drops repeated
    /// (user, item) pairs, keeping the first occurrence.
    pub fn from_raw<'a, I>(rows: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, Option<i64>)>,
    {
        let mut user_ids = IdMap::new();
        let mut item_ids = IdMap::new();
        let mut seen = HashSet::new();
        let mut records = Vec::new();
        for (u, i, ts) in rows {
            let user = user_ids.intern(u);
            let item = item_ids.intern(i);
            if seen.insert((user, item)) {
                records.push(Interaction {
                    user,
                    item,
                    timestamp: ts,
                });
            }
        }
        Self {
            num_users: user_ids.len(),
            num_items: item_ids.len(),
            records,
            user_ids,
            item_ids,
        }
    }

    /// Builds a set over an existing id space. Duplicate pairs are dropped.
    pub fn with_id_space(records: Vec<Interaction>, user_ids: IdMap, item_ids: IdMap) -> Self {
        let mut seen = HashSet::with_capacity(records.len());
        let records: Vec<_> = records
            .into_iter()
            .filter(|r| seen.insert((r.user, r.item)))
            .collect();
        Self {
            num_users: user_ids.len(),
            num_items: item_ids.len(),
            records,
            user_ids,
            item_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn user_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.num_users];
        for r in &self.records {
            deg[r.user as usize] += 1;
        }
        deg
    }

    pub fn item_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.num_items];
        for r in &self.records {
            deg[r.item as usize] += 1;
        }
        deg
    }

    /// Item lists per user, each sorted ascending.
    pub fn items_by_user(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_users];
        for r in &self.records {
            out[r.user as usize].push(r.item);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }

    /// User lists per item, each sorted ascending.
    pub fn users_by_item(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.num_items];
        for r in &self.records {
            out[r.item as usize].push(r.user);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }

    pub fn pairs(&self) -> Vec<(u32, u32)> {
        self.records.iter().map(|r| (r.user, r.item)).collect()
    }
}

/// Column delimiter of an interaction log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Tabs or any run of whitespace.
    Tsv,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" | "tab" | "space" | "whitespace" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?}"))),
        }
    }
}

/// Reads `raw_user raw_item [rating] [timestamp]` lines. With three columns
/// the third is the timestamp; with four or more the fourth is. Blank lines
/// and `#` comments are skipped.
pub fn load_interactions(path: impl AsRef<Path>, format: Format) -> Result<InteractionSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match format {
            Format::Tsv => line.split_whitespace().collect(),
            Format::Csv => line.split(',').map(str::trim).collect(),
        };
        if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                message: format!("expected at least 2 fields, got {line:?}"),
            });
        }
        let ts_field = match fields.len() {
            2 => None,
            3 => Some(fields[2]),
            _ => Some(fields[3]),
        };
        let timestamp = ts_field
            .map(|t| {
                t.parse::<i64>().map_err(|_| Error::Parse {
                    path: path.to_owned(),
                    line: lineno + 1,
                    message: format!("timestamp {t:?} is not an integer"),
                })
            })
            .transpose()?;
        rows.push((fields[0], fields[1], timestamp));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    Ok(InteractionSet::from_raw(rows))
}

/// Iteratively drops users and items with fewer than `k` interactions until a
/// fixed point, then re-compacts both id spaces.
pub fn apply_k_core(set: &InteractionSet, k: usize) -> Result<InteractionSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-core requires k >= 1".into()));
    }
    let mut alive = vec![true; set.records.len()];
    let mut user_deg: Vec<usize> = set.user_degrees().into_iter().map(|d| d as usize).collect();
    let mut item_deg: Vec<usize> = set.item_degrees().into_iter().map(|d| d as usize).collect();
    loop {
        let mut changed = false;
        for (r, a) in set.records.iter().zip(alive.iter_mut()) {
            if *a && (user_deg[r.user as usize] < k || item_deg[r.item as usize] < k) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        user_deg.iter_mut().for_each(|d| *d = 0);
        item_deg.iter_mut().for_each(|d| *d = 0);
        for (r, _) in set.records.iter().zip(&alive).filter(|(_, &a)| a) {
            user_deg[r.user as usize] += 1;
            item_deg[r.item as usize] += 1;
        }
    }

    let keep_user: Vec<bool> = user_deg.iter().map(|&d| d > 0).collect();
    let keep_item: Vec<bool> = item_deg.iter().map(|&d| d > 0).collect();
    let (user_ids, user_remap) = set.user_ids.retain(&keep_user);
    let (item_ids, item_remap) = set.item_ids.retain(&keep_item);
    let records: Vec<Interaction> = set
        .records
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(r, _)| Interaction {
            user: user_remap[r.user as usize].expect("live record has live user"),
            item: item_remap[r.item as usize].expect("live record has live item"),
            timestamp: r.timestamp,
        })
        .collect();
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!("nothing survives {k}-core filtering")));
    }
    Ok(InteractionSet {
        num_users: user_ids.len(),
        num_items: item_ids.len(),
        records,
        user_ids,
        item_ids,
    })
}

/// Train/valid/test partitions over one shared id space.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionSet,
    pub valid: InteractionSet,
    pub test: InteractionSet,
    pub split_seed: u64,
}

impl SplitDataset {
    pub fn num_users(&self) -> usize {
        self.train.num_users
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items
    }
}

/// Which partition a record landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Valid,
    Test,
}

impl Part {
    pub fn as_str(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Valid => "valid",
            Part::Test => "test",
        }
    }
}

/// Per-user generator: one ChaCha stream per user index, so a user's shuffle
/// depends only on `(seed, user)`.
pub(crate) fn user_rng(seed: u64, user: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user);
    rng
}

/// Shuffles each user's interactions and cuts them by `ratios`. Valid and
/// test counts are floored; the remainder goes to train. Users with fewer
/// than three interactions keep everything in train.
pub fn split_per_user(set: &InteractionSet, ratios: (f64, f64, f64), seed: u64) -> Result<SplitDataset> {
    let (rt, rv, rs) = ratios;
    if !(rt > 0.0 && rv > 0.0 && rs > 0.0) || ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive and sum to 1, got {rt},{rv},{rs}"
        )));
    }
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); set.num_users];
    for (idx, r) in set.records.iter().enumerate() {
        by_user[r.user as usize].push(idx);
    }
    let mut part = vec![Part::Train; set.records.len()];
    for (user, idxs) in by_user.iter_mut().enumerate() {
        let n = idxs.len();
        if n < 3 {
            continue;
        }
        idxs.shuffle(&mut user_rng(seed, user as u64));
        let n_valid = (n as f64 * rv + 1e-9).floor() as usize;
        let n_test = (n as f64 * rs + 1e-9).floor() as usize;
        for &i in &idxs[..n_valid] {
            part[i] = Part::Valid;
        }
        for &i in &idxs[n_valid..n_valid + n_test] {
            part[i] = Part::Test;
        }
    }
    Ok(split_from_parts(set, &part, seed))
}

pub(crate) fn split_from_parts(set: &InteractionSet, part: &[Part], seed: u64) -> SplitDataset {
    let pick = |want: Part| {
        let records = set
            .records
            .iter()
            .zip(part)
            .filter(|(_, &p)| p == want)
            .map(|(r, _)| *r)
            .collect();
        InteractionSet {
            num_users: set.num_users,
            num_items: set.num_items,
            records,
            user_ids: set.user_ids.clone(),
            item_ids: set.item_ids.clone(),
        }
    };
    SplitDataset {
        train: pick(Part::Train),
        valid: pick(Part::Valid),
        test: pick(Part::Test),
        split_seed: seed,
    }
}

/// Sparse bipartite operator with weights `1/sqrt(|N_u| |N_i|)`, stored as a
/// user-major CSR and its item-major transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub num_users: usize,
    pub num_items: usize,
    user_ptr: Vec<usize>,
    user_cols: Vec<u32>,
    user_vals: Vec<f64>,
    item_ptr: Vec<usize>,
    item_cols: Vec<u32>,
    item_vals: Vec<f64>,
    pub user_degree: Vec<u32>,
    pub item_degree: Vec<u32>,
    /// Entities with no training edge; they only keep their layer-0 embedding.
    pub isolated_users: usize,
    pub isolated_items: usize,
}

pub fn build_adjacency(train: &InteractionSet) -> Result<NormalizedAdjacency> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("training set has no interactions".into()));
    }
    let by_user = train.items_by_user();
    let by_item = train.users_by_item();
    let user_degree: Vec<u32> = by_user.iter().map(|v| v.len() as u32).collect();
    let item_degree: Vec<u32> = by_item.iter().map(|v| v.len() as u32).collect();
    let weight = |u: u32, i: u32| {
        1.0 / ((user_degree[u as usize] as f64) * (item_degree[i as usize] as f64)).sqrt()
    };

    let csr = |lists: &[Vec<u32>], w: &dyn Fn(usize, u32) -> f64| {
        let mut ptr = Vec::with_capacity(lists.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        ptr.push(0);
        for (row, list) in lists.iter().enumerate() {
            for &c in list {
                cols.push(c);
                vals.push(w(row, c));
            }
            ptr.push(cols.len());
        }
        (ptr, cols, vals)
    };
    let (user_ptr, user_cols, user_vals) = csr(&by_user, &|u, i| weight(u as u32, i));
    let (item_ptr, item_cols, item_vals) = csr(&by_item, &|i, u| weight(u, i as u32));

    let isolated_users = user_degree.iter().filter(|&&d| d == 0).count();
    let isolated_items = item_degree.iter().filter(|&&d| d == 0).count();
    if isolated_users + isolated_items > 0 {
        warn!("{isolated_users} users and {isolated_items} items have no training edges");
    }
    Ok(NormalizedAdjacency {
        num_users: train.num_users,
        num_items: train.num_items,
        user_ptr,
        user_cols,
        user_vals,
        item_ptr,
        item_cols,
        item_vals,
        user_degree,
        item_degree,
        isolated_users,
        isolated_items,
    })
}

impl NormalizedAdjacency {
    pub fn nnz(&self) -> usize {
        self.user_cols.len()
    }

    /// Stored weight of edge `(user, item)`, if present.
    pub fn weight(&self, user: usize, item: usize) -> Option<f64> {
        let (lo, hi) = (self.user_ptr[user], self.user_ptr[user + 1]);
        self.user_cols[lo..hi]
            .binary_search(&(item as u32))
            .ok()
            .map(|k| self.user_vals[lo + k])
    }

    /// Neighbours of a user with their weights.
    pub fn user_row(&self, user: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.user_ptr[user], self.user_ptr[user + 1]);
        self.user_cols[lo..hi]
            .iter()
            .zip(&self.user_vals[lo..hi])
            .map(|(&c, &w)| (c as usize, w))
    }

    /// Neighbours of an item with their weights.
    pub fn item_row(&self, item: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.item_ptr[item], self.item_ptr[item + 1]);
        self.item_cols[lo..hi]
            .iter()
            .zip(&self.item_vals[lo..hi])
            .map(|(&c, &w)| (c as usize, w))
    }

    /// `out[u] = sum_i w_ui * items[i]`.
    pub fn items_to_users(&self, items: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
        assert_eq!(items.nrows(), self.num_items);
        assert_eq!(out.nrows(), self.num_users);
        spmm(&self.user_ptr, &self.user_cols, &self.user_vals, items, out.view_mut());
    }

    /// `out[i] = sum_u w_ui * users[u]`.
    pub fn users_to_items(&self, users: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
        assert_eq!(users.nrows(), self.num_users);
        assert_eq!(out.nrows(), self.num_items);
        spmm(&self.item_ptr, &self.item_cols, &self.item_vals, users, out.view_mut());
    }
}

fn spmm(ptr: &[usize], cols: &[u32], vals: &[f64], src: ArrayView2<f64>, mut out: ArrayViewMut2<f64>) {
    use ndarray::parallel::prelude::*;
    use ndarray::Axis;
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(row, mut dst)| {
            dst.fill(0.0);
            for k in ptr[row]..ptr[row + 1] {
                dst.scaled_add(vals[k], &src.row(cols[k] as usize));
            }
        });
}
