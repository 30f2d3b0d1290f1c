//! Invariants checked over generated inputs.

use std::collections::BTreeSet;

use ndarray::Array2;
use nocollapse_core::clustering::{ipot_assign, IpotConfig, MembershipMode, MembershipSet};
use nocollapse_core::dataset::split_per_user;
use nocollapse_core::diagnostics::{embedding_metrics, spectrum};
use nocollapse_core::encoder::normalize_rows;
use nocollapse_core::evaluator::{top_n, user_metrics};
use nocollapse_core::objectives::{alignment_loss, coding_rate, compactness_loss, uniformity_value};
use nocollapse_core::InteractionSet;
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (2..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c).prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn unit(m: &Array2<f64>) -> Array2<f64> {
    normalize_rows(m.view()).rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coding_rate_is_nonnegative_and_null_compactness_vanishes(e in matrix(24, 8), eps in 0.01f64..1.0) {
        let r = coding_rate(e.view(), eps).unwrap();
        prop_assert!(r.value >= 0.0);
        let c = compactness_loss(e.view(), eps, &MembershipSet::single(e.nrows())).unwrap();
        prop_assert!(c.loss.value.abs() <= 1e-9 * (1.0 + r.value));
        prop_assert!(c.loss.grad.iter().all(|g| g.abs() <= 1e-9 * (1.0 + r.value)));
    }

    #[test]
    fn unit_rows_bound_alignment_and_uniformity(u in matrix(12, 6), seed in 0u64..1000) {
        let u = unit(&u);
        let items = u.clone();
        let pairs: Vec<(usize, usize)> = (0..u.nrows()).map(|k| (k, (k + seed as usize) % u.nrows())).collect();
        let a = alignment_loss(&pairs, u.view(), items.view()).value;
        prop_assert!((-1e-12..=4.0 + 1e-12).contains(&a));
        let un = uniformity_value(u.view()).unwrap();
        // Two antipodal points reach the lower end, −2t·2 = −8.
        prop_assert!((-8.0 - 1e-9..=1e-12).contains(&un));
        let m = embedding_metrics(u.view(), items.view(), &pairs).unwrap();
        prop_assert!((m.alignment - a).abs() <= 1e-12);
    }

    #[test]
    fn spectrum_is_scale_invariant_and_sorted(b in matrix(10, 10), c in 0.01f64..100.0) {
        let cov = b.t().dot(&b);
        let s1 = spectrum(cov.view(), &[1e-2]).unwrap();
        let s2 = spectrum((&cov * c).view(), &[1e-2]).unwrap();
        prop_assert!(s1.values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s1.values.iter().all(|v| (0.0..=1.0).contains(v)));
        for (x, y) in s1.values.iter().zip(&s2.values) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn transport_plans_respect_marginals(k in 2usize..10, n in 2usize..40, seed in 0u64..10_000) {
        // Column-stochastic posteriors divided by n, from a deterministic hash.
        let mut p = Array2::from_shape_fn((k, n), |(y, u)| {
            let h = (y as u64 * 2654435761 + u as u64 * 40503 + seed * 97) % 1000;
            (h as f64 + 1.0) / 1000.0
        });
        for mut col in p.columns_mut() {
            let s = col.sum();
            col /= s * n as f64;
        }
        let cfg = IpotConfig { max_iterations: 2000, tol: 1e-9, ..IpotConfig::default() };
        let q = ipot_assign(p.view(), &cfg).unwrap();
        prop_assert!(q.q.iter().all(|&v| v >= 0.0));
        prop_assert!(q.marginal_error <= 1e-6, "{}", q.marginal_error);
    }

    #[test]
    fn ranking_masks_train_items_and_recall_is_monotone(
        scores in prop::collection::vec(-1.0f64..1.0, 30),
        mask in prop::collection::btree_set(0u32..30, 0..10),
        truth in prop::collection::btree_set(0u32..30, 1..6),
    ) {
        let items = Array2::from_shape_vec((30, 1), scores).unwrap();
        let users = Array2::from_elem((1, 1), 1.0);
        let mask: Vec<u32> = mask.into_iter().collect();
        let truth: Vec<u32> = truth.into_iter().filter(|i| !mask.contains(i)).collect();
        prop_assume!(!truth.is_empty());
        let list = &top_n(users.view(), items.view(), &[mask.clone()], &[0], 30)[0];
        prop_assert_eq!(list.len(), 30 - mask.len());
        prop_assert!(list.iter().all(|i| !mask.contains(i)));
        let cutoffs: Vec<usize> = (1..=30).collect();
        let m = user_metrics(list, &truth, &cutoffs);
        prop_assert!(m.windows(2).all(|w| w[0].0 <= w[1].0 + 1e-15));
        prop_assert!(m.iter().all(|&(r, n)| (0.0..=1.0).contains(&r) && (0.0..=1.0 + 1e-12).contains(&n)));
    }

    #[test]
    fn per_user_split_partitions_the_records(
        edges in prop::collection::btree_set((0u8..15, 0u8..12), 1..120),
        seed in 0u64..1000,
    ) {
        let names: Vec<(String, String)> = edges.iter().map(|&(u, i)| (format!("u{u}"), format!("i{i}"))).collect();
        let set = InteractionSet::from_raw(names.iter().map(|(u, i)| (u.as_str(), i.as_str(), None)));
        let split = split_per_user(&set, (0.8, 0.1, 0.1), seed).unwrap();
        let key = |s: &InteractionSet| -> BTreeSet<(u32, u32)> { s.records.iter().map(|r| (r.user, r.item)).collect() };
        let (tr, va, te) = (key(&split.train), key(&split.valid), key(&split.test));
        prop_assert_eq!(tr.len() + va.len() + te.len(), set.len());
        prop_assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        let all: BTreeSet<_> = tr.union(&va).chain(te.iter()).copied().collect();
        prop_assert_eq!(all, key(&set));
        prop_assert_eq!(split_per_user(&set, (0.8, 0.1, 0.1), seed).unwrap(), split);
    }

    #[test]
    fn restricted_and_pruned_memberships_keep_row_sums(
        w in prop::collection::vec(0.0f64..1.0, 8 * 5),
        keep in prop::collection::btree_set(0u32..8, 1..8),
    ) {
        let mut w = Array2::from_shape_vec((8, 5), w).unwrap();
        for mut r in w.rows_mut() {
            r += 1e-3;
            let s = r.sum();
            r /= s;
        }
        let set = MembershipSet::from_dense(&w, MembershipMode::Soft, 0.0);
        for s in set.pruned(0.15).row_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
        let rows: Vec<u32> = keep.into_iter().collect();
        let sub = set.restrict(&rows);
        prop_assert_eq!(sub.num_entities, rows.len());
        for (k, s) in sub.row_sums().into_iter().enumerate() {
            let full: f64 = w.row(rows[k] as usize).sum();
            prop_assert!((s - full).abs() <= 1e-12);
        }
    }
}
