//! Library results against slow, independent reference implementations.

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use nocollapse_core::clustering::{assignment_cost, build_cooccurrence, ipot_assign, IpotConfig, Side};
use nocollapse_core::dataset::{apply_k_core, build_adjacency};
use nocollapse_core::diagnostics::{covariance, spectrum};
use nocollapse_core::encoder::{init_embeddings, propagate};
use nocollapse_core::{InteractionSet, Pooling};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_set(rng: &mut ChaCha8Rng, users: usize, items: usize, density: f64) -> InteractionSet {
    let names_u: Vec<String> = (0..users).map(|u| format!("u{u}")).collect();
    let names_i: Vec<String> = (0..items).map(|i| format!("i{i}")).collect();
    let mut rows = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random::<f64>() < density {
                rows.push((names_u[u].as_str(), names_i[i].as_str(), None));
            }
        }
    }
    InteractionSet::from_raw(rows)
}

fn raw_pairs(set: &InteractionSet) -> BTreeSet<(String, String)> {
    set.records
        .iter()
        .map(|r| (set.user_ids.raw(r.user).to_owned(), set.item_ids.raw(r.item).to_owned()))
        .collect()
}

/// Dense `R` with `R[u][i] = 1` on interactions.
fn dense_r(set: &InteractionSet) -> Array2<f64> {
    let mut r = Array2::zeros((set.num_users, set.num_items));
    for rec in &set.records {
        r[[rec.user as usize, rec.item as usize]] = 1.0;
    }
    r
}

#[test]
fn k_core_matches_naive_peeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..30 {
        let set = random_set(&mut rng, 25, 20, 0.12 + 0.01 * (trial % 10) as f64);
        let k = 2 + trial % 4;
        // Remove one offending pair set at a time, recounting from scratch.
        let mut pairs = raw_pairs(&set);
        loop {
            let count = |pick: fn(&(String, String)) -> &String, pairs: &BTreeSet<(String, String)>, key: &String| {
                pairs.iter().filter(|p| pick(p) == key).count()
            };
            let bad: Vec<_> = pairs
                .iter()
                .filter(|p| count(|p| &p.0, &pairs, &p.0) < k || count(|p| &p.1, &pairs, &p.1) < k)
                .cloned()
                .collect();
            if bad.is_empty() {
                break;
            }
            for b in bad {
                pairs.remove(&b);
            }
        }
        match apply_k_core(&set, k) {
            Ok(core) => {
                assert_eq!(raw_pairs(&core), pairs, "trial {trial}");
                assert!(core.user_degrees().iter().chain(core.item_degrees().iter()).all(|&d| d as usize >= k));
            }
            Err(_) => assert!(pairs.is_empty(), "trial {trial}"),
        }
    }
}

#[test]
fn adjacency_and_propagation_match_dense_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let set = random_set(&mut rng, 15, 11, 0.25);
    let (nu, ni) = (set.num_users, set.num_items);
    let adj = build_adjacency(&set).unwrap();
    let r = dense_r(&set);
    let du = r.sum_axis(Axis(1));
    let di = r.sum_axis(Axis(0));

    // Symmetric normalized bipartite matrix over users then items.
    let n = nu + ni;
    let mut a = Array2::<f64>::zeros((n, n));
    for u in 0..nu {
        for i in 0..ni {
            if r[[u, i]] > 0.0 {
                let w = 1.0 / (du[u] * di[i]).sqrt();
                a[[u, nu + i]] = w;
                a[[nu + i, u]] = w;
                assert_eq!(adj.weight(u, i), Some(w));
            } else {
                assert_eq!(adj.weight(u, i), None);
            }
        }
    }

    let table = init_embeddings(nu, ni, 5, 3, 1.0).unwrap();
    let mut e0 = Array2::zeros((n, 5));
    e0.slice_mut(ndarray::s![..nu, ..]).assign(&table.user);
    e0.slice_mut(ndarray::s![nu.., ..]).assign(&table.item);
    for layers in 0..4 {
        let mut pooled = e0.clone();
        let mut power = e0.clone();
        for _ in 0..layers {
            power = a.dot(&power);
            pooled += &power;
        }
        pooled /= (layers + 1) as f64;
        let c = propagate(&adj, &table, &Pooling::uniform(layers));
        let got_u = &c.pooled_user - &pooled.slice(ndarray::s![..nu, ..]);
        let got_i = &c.pooled_item - &pooled.slice(ndarray::s![nu.., ..]);
        let err = got_u.iter().chain(got_i.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12, "L={layers}: {err}");
    }
}

#[test]
fn cooccurrence_matches_r_rt() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let set = random_set(&mut rng, 30, 18, 0.2);
    let r = dense_r(&set);
    for (side, dense) in [(Side::User, r.dot(&r.t())), (Side::Item, r.t().dot(&r))] {
        let g = build_cooccurrence(&set, side, usize::MAX).unwrap();
        assert_eq!(g.len(), dense.nrows());
        let mut nnz = 0;
        for ((a, b), &v) in dense.indexed_iter() {
            assert_eq!(g.get(a, b) as f64, v, "{side:?} ({a}, {b})");
            nnz += (v > 0.0) as usize;
        }
        assert_eq!(g.nnz(), nnz);
    }
    assert!(build_cooccurrence(&set, Side::User, 10).is_err());
}

/// Cyclic Jacobi rotations on a symmetric matrix; returns its eigenvalues.
fn jacobi_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

#[test]
fn spectrum_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..5 {
        let b = Array2::from_shape_simple_fn((32, 20 + 6 * trial), || rng.sample::<f64, _>(StandardNormal));
        let c = b.dot(&b.t()) / 40.0;
        let report = spectrum(c.view(), &[1e-2]).unwrap();
        let oracle = jacobi_eigenvalues(c.clone());
        for (k, (&got, &want)) in report.values.iter().zip(&oracle).enumerate() {
            assert!((got - want.max(0.0) / oracle[0]).abs() < 1e-9, "trial {trial} value {k}: {got} vs {want}");
        }
        assert!((report.raw_max - oracle[0]).abs() < 1e-9 * oracle[0]);
    }
}

#[test]
fn covariance_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = Array2::from_shape_simple_fn((200, 16), || rng.sample::<f64, _>(StandardNormal));
    let c = covariance(e.view()).unwrap();
    let n = e.nrows() as f64;
    let mean: Vec<f64> = (0..16).map(|j| e.column(j).sum() / n).collect();
    for a in 0..16 {
        for b in 0..16 {
            let s: f64 = e.rows().into_iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / n;
            assert!((c[[a, b]] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn transport_on_two_by_two_matches_linear_program() {
    let config = IpotConfig {
        beta: 0.5,
        max_iterations: 5000,
        inner_sweeps: 1,
        tol: 1e-12,
    };
    let grid: Vec<f64> = (0..10).map(|k| k as f64 / 9.0).collect();
    for &x in &grid {
        for &y in &grid {
            // Costs [[x, 1/2], [1/2, y]] as P = exp(−C).
            let cost = ndarray::array![[x, 0.5], [0.5, y]];
            let gap = (x + y) - 1.0;
            if gap.abs() < 1e-12 {
                continue; // every feasible plan is optimal
            }
            let p = cost.mapv(|c: f64| (-c).exp());
            let q = ipot_assign(p.view(), &config).unwrap();
            // Feasible plans are [[a, 1/2 − a], [1/2 − a, a]]; the cost is
            // linear in a, so the optimum sits at a vertex.
            let a = if gap < 0.0 { 0.5 } else { 0.0 };
            let want = ndarray::array![[a, 0.5 - a], [0.5 - a, a]];
            let err = (&q.q - &want).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err <= 1e-4, "x={x} y={y}: {:?}", q.q);
            assert!(assignment_cost(q.q.view(), p.view()) <= assignment_cost(want.view(), p.view()) + 1e-4);
        }
    }
}
