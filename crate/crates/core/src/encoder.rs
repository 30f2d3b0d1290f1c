//! Linear graph propagation with layer pooling and row normalization, plus
//! the exact adjoint used for training.
//!
//! The joint user/item operator `A = [[0, W], [Wᵀ, 0]]` is symmetric, so the
//! adjoint of `pool(A⁰x, A¹x, …, Aᴸx)` is the same pooled propagation applied
//! to the incoming gradient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::NormalizedAdjacency;
use crate::error::{Error, Result};

/// Trainable layer-0 embeddings, one row per entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub user: Array2<f64>,
    pub item: Array2<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.user.ncols()
    }

    pub fn num_users(&self) -> usize {
        self.user.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.item.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.user.iter().chain(self.item.iter()).all(|v| v.is_finite())
    }
}

/// Entries drawn i.i.d. from `N(0, scale²)`; users first, then items.
pub fn init_embeddings(num_users: usize, num_items: usize, dim: usize, seed: u64, scale: f64) -> Result<EmbeddingTable> {
    if !(scale > 0.0) || dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "embedding init needs scale > 0 and dim >= 1 (got scale={scale}, dim={dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, scale).expect("scale is positive");
    let mut draw = |rows| Array2::from_shape_simple_fn((rows, dim), || normal.sample(&mut rng));
    let user = draw(num_users);
    let item = draw(num_items);
    Ok(EmbeddingTable { user, item })
}

/// Layer count and the pooling weight of each layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pooling {
    weights: Vec<f64>,
}

impl Pooling {
    /// `1/(L+1)` on each of the `L+1` layers.
    pub fn uniform(layers: usize) -> Self {
        let w = 1.0 / (layers + 1) as f64;
        Self {
            weights: vec![w; layers + 1],
        }
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("pooling needs at least one finite layer weight".into()));
        }
        Ok(Self { weights })
    }

    pub fn layers(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Unit-normalized rows together with the norms they were divided by.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRows {
    pub rows: Array2<f64>,
    pub norms: Array1<f64>,
}

impl NormalizedRows {
    /// Rows that were zero and therefore left untouched.
    pub fn zero_rows(&self) -> Vec<usize> {
        self.norms
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Pulls a gradient on the unit rows back through `x ↦ x/‖x‖`:
    /// `(g − ê⟨ê, g⟩)/‖x‖`, and zero on zero rows.
    pub fn pullback(&self, grad: ArrayView2<f64>) -> Array2<f64> {
        let mut out = grad.to_owned();
        Zip::from(out.rows_mut())
            .and(self.rows.rows())
            .and(&self.norms)
            .for_each(|mut g, e, &n| {
                if n == 0.0 {
                    g.fill(0.0);
                    return;
                }
                let along = g.dot(&e);
                g.scaled_add(-along, &e);
                g /= n;
            });
        out
    }
}

pub fn normalize_rows(m: ArrayView2<f64>) -> NormalizedRows {
    let mut rows = m.to_owned();
    let norms = rows.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    Zip::from(rows.rows_mut()).and(&norms).for_each(|mut r, &n| {
        if n > 0.0 {
            r /= n;
        }
    });
    NormalizedRows { rows, norms }
}

/// Everything the forward pass produced.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `e⁽ˡ⁾` for `l = 0..=L`.
    pub user_layers: Vec<Array2<f64>>,
    pub item_layers: Vec<Array2<f64>>,
    pub pooled_user: Array2<f64>,
    pub pooled_item: Array2<f64>,
    pub pooling: Pooling,
    /// Present after [`ForwardCache::normalize`].
    pub unit_user: Option<NormalizedRows>,
    pub unit_item: Option<NormalizedRows>,
}

impl ForwardCache {
    pub fn normalize(&mut self) {
        self.unit_user = Some(normalize_rows(self.pooled_user.view()));
        self.unit_item = Some(normalize_rows(self.pooled_item.view()));
    }

    /// Normalized outputs when available, pooled otherwise.
    pub fn output(&self) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        match (&self.unit_user, &self.unit_item) {
            (Some(u), Some(i)) => (u.rows.view(), i.rows.view()),
            _ => (self.pooled_user.view(), self.pooled_item.view()),
        }
    }
}

pub fn propagate(adj: &NormalizedAdjacency, table: &EmbeddingTable, pooling: &Pooling) -> ForwardCache {
    let w = pooling.weights();
    let mut user_layers = vec![table.user.clone()];
    let mut item_layers = vec![table.item.clone()];
    let mut pooled_user = &table.user * w[0];
    let mut pooled_item = &table.item * w[0];
    for l in 1..=pooling.layers() {
        let mut nu = Array2::zeros(table.user.raw_dim());
        let mut ni = Array2::zeros(table.item.raw_dim());
        adj.items_to_users(item_layers[l - 1].view(), nu.view_mut());
        adj.users_to_items(user_layers[l - 1].view(), ni.view_mut());
        pooled_user.scaled_add(w[l], &nu);
        pooled_item.scaled_add(w[l], &ni);
        user_layers.push(nu);
        item_layers.push(ni);
    }
    ForwardCache {
        user_layers,
        item_layers,
        pooled_user,
        pooled_item,
        pooling: pooling.clone(),
        unit_user: None,
        unit_item: None,
    }
}

/// The pooled propagation operator applied to a user/item block pair without
/// keeping per-layer state.
pub fn pooled_apply(
    adj: &NormalizedAdjacency,
    user: ArrayView2<f64>,
    item: ArrayView2<f64>,
    pooling: &Pooling,
) -> (Array2<f64>, Array2<f64>) {
    let w = pooling.weights();
    let mut cur_u = user.to_owned();
    let mut cur_i = item.to_owned();
    let mut out_u = &cur_u * w[0];
    let mut out_i = &cur_i * w[0];
    let mut next_u = Array2::zeros(cur_u.raw_dim());
    let mut next_i = Array2::zeros(cur_i.raw_dim());
    for &wl in &w[1..] {
        adj.items_to_users(cur_i.view(), next_u.view_mut());
        adj.users_to_items(cur_u.view(), next_i.view_mut());
        std::mem::swap(&mut cur_u, &mut next_u);
        std::mem::swap(&mut cur_i, &mut next_i);
        out_u.scaled_add(wl, &cur_u);
        out_i.scaled_add(wl, &cur_i);
    }
    (out_u, out_i)
}

/// Gradients with respect to the layer-0 tables.
///
/// `grad_user`/`grad_item` are taken with respect to the cache's output: the
/// unit rows if the cache was normalized, the pooled rows otherwise.
pub fn backprop(
    adj: &NormalizedAdjacency,
    cache: &ForwardCache,
    grad_user: ArrayView2<f64>,
    grad_item: ArrayView2<f64>,
) -> EmbeddingTable {
    let gu = match &cache.unit_user {
        Some(n) => n.pullback(grad_user),
        None => grad_user.to_owned(),
    };
    let gi = match &cache.unit_item {
        Some(n) => n.pullback(grad_item),
        None => grad_item.to_owned(),
    };
    let (user, item) = pooled_apply(adj, gu.view(), gi.view(), &cache.pooling);
    EmbeddingTable { user, item }
}

/// Preference score `eᵤᵀeᵢ`.
pub fn score(user: ArrayView1<f64>, item: ArrayView1<f64>) -> f64 {
    assert_eq!(user.len(), item.len(), "score needs equal dimensions");
    user.dot(&item)
}
