use std::collections::BTreeSet;

use erasebench::data::{apply_forget, Dataset, ForgetBatch, Interaction};
use erasebench::math::rng_from;
use erasebench::models::{
    exact_unlearn_counts, hvp_apply, lightgcn_propagate, loss_grad, predict_topk, train, ModelHyper,
    ModelKind, Objective, RecModel, Sample, SampleSet,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn dataset(rows: &[(u32, u32)], users: usize, items: usize) -> Dataset {
    let train = rows
        .iter()
        .enumerate()
        .map(|(k, &(user, item))| Interaction {
            id: k as u32,
            user,
            item,
            timestamp: k as i64,
        })
        .collect();
    Dataset::from_parts(
        (0..users).map(|u| format!("u{u:03}")).collect(),
        (0..items).map(|i| format!("i{i:03}")).collect(),
        train,
        vec![Vec::new(); users],
        vec![None; items],
        BTreeSet::new(),
    )
    .unwrap()
}

fn random_rows(rng: &mut impl Rng, users: usize, items: usize, n: usize) -> Vec<(u32, u32)> {
    (0..n)
        .map(|_| (rng.random_range(0..users as u32), rng.random_range(0..items as u32)))
        .collect()
}

/// Random gradient model with at most 49 parameters plus weighted samples
/// that include negative coefficients and negative-free samples.
fn gradient_fixture(kind: ModelKind, seed: u64) -> (RecModel, SampleSet, Vec<f64>) {
    let mut rng = rng_from(&[seed, 77]);
    let (users, items, dim) = (3, 4, 7);
    let ds = dataset(&random_rows(&mut rng, users, items, 8), users, items);
    let normal = Normal::new(0.0, 0.5).unwrap();
    let values: Vec<f64> = (0..(users + items) * dim).map(|_| normal.sample(&mut rng)).collect();
    let hyper = ModelHyper {
        embedding_dim: dim,
        layers: 2,
        l2_reg: 0.05,
        ..Default::default()
    };
    let model = RecModel::from_embeddings(kind, hyper, users, items, values, Some(&ds)).unwrap();
    let mut samples = Vec::new();
    let mut coeffs = Vec::new();
    for _ in 0..6 {
        let user = rng.random_range(0..users as u32);
        let positive = rng.random_range(0..items as u32);
        let negative = if rng.random_bool(0.8) {
            let j = (positive + rng.random_range(1..items as u32)) % items as u32;
            Some(j)
        } else {
            None
        };
        samples.push(Sample { user, positive, negative });
        coeffs.push(rng.random_range(-1.0..1.0));
    }
    (model, SampleSet::new(samples).unwrap(), coeffs)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn shifted(model: &RecModel, dir: &[f64], eps: f64) -> RecModel {
    let mut m = model.clone();
    for (p, d) in m.params_mut().values_mut().iter_mut().zip(dir) {
        *p += eps * d;
    }
    m
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    for kind in [ModelKind::BprMf, ModelKind::Lightgcn] {
        for seed in 0..20 {
            let (model, samples, coeffs) = gradient_fixture(kind, seed);
            assert!(model.params().len() <= 50);
            let (_, grad) = loss_grad(&model, &samples, &coeffs).unwrap();
            let mut worst = 0.0f64;
            for k in 0..grad.len() {
                let mut e = vec![0.0; grad.len()];
                e[k] = 1.0;
                let (lp, _) = shifted(&model, &e, h).loss_grad(&samples, &coeffs).unwrap();
                let (lm, _) = shifted(&model, &e, -h).loss_grad(&samples, &coeffs).unwrap();
                worst = worst.max(rel_err(grad[k], (lp - lm) / (2.0 * h)));
            }
            assert!(worst < 1e-4, "{kind} seed {seed}: relative error {worst}");
        }
    }
}

#[test]
fn hvp_matches_gradient_differences() {
    let eps = 1e-5;
    for kind in [ModelKind::BprMf, ModelKind::Lightgcn] {
        for seed in 0..20 {
            let (model, samples, coeffs) = gradient_fixture(kind, seed);
            let mut rng = rng_from(&[seed, 5]);
            let v: Vec<f64> = (0..model.params().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hv = hvp_apply(&model, &samples, &coeffs, &v, 0.0).unwrap();
            let (_, gp) = shifted(&model, &v, eps).loss_grad(&samples, &coeffs).unwrap();
            let (_, gm) = shifted(&model, &v, -eps).loss_grad(&samples, &coeffs).unwrap();
            let worst = hv
                .iter()
                .zip(gp.iter().zip(&gm))
                .map(|(a, (p, m))| rel_err(*a, (p - m) / (2.0 * eps)))
                .fold(0.0, f64::max);
            assert!(worst < 1e-3, "{kind} seed {seed}: relative error {worst}");
        }
    }
}

#[test]
fn hvp_damping_and_zero_vector() {
    let (model, samples, coeffs) = gradient_fixture(ModelKind::Lightgcn, 3);
    let n = model.params().len();
    assert!(hvp_apply(&model, &samples, &coeffs, &vec![0.0; n], 0.0)
        .unwrap()
        .iter()
        .all(|x| *x == 0.0));
    let v: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
    let a = hvp_apply(&model, &samples, &coeffs, &v, 0.0).unwrap();
    let b = hvp_apply(&model, &samples, &coeffs, &v, 0.25).unwrap();
    for k in 0..n {
        assert!((b[k] - a[k] - 0.25 * v[k]).abs() <= 1e-12 * (1.0 + a[k].abs()));
    }
    assert!(hvp_apply(&model, &samples, &coeffs, &v[1..], 0.0).is_err());
}

#[test]
fn coefficients_are_linear() {
    let (model, samples, _) = gradient_fixture(ModelKind::BprMf, 9);
    let plus = vec![1.0; samples.len()];
    let minus = vec![-1.0; samples.len()];
    let zero = vec![0.0; samples.len()];
    let (lp, gp) = loss_grad(&model, &samples, &plus).unwrap();
    let (lm, gm) = loss_grad(&model, &samples, &minus).unwrap();
    assert_eq!(lp, -lm);
    assert!(gp.iter().zip(&gm).all(|(a, b)| *a == -*b));
    assert!(loss_grad(&model, &samples, &zero).unwrap().1.iter().all(|g| *g == 0.0));
}

#[test]
fn hand_set_embeddings_rank_like_dense_dot_products() {
    let dim = 3;
    let (users, items) = (2, 5);
    let values = vec![
        0.3, -1.0, 0.5, /* u1 */ 1.0, 0.0, -0.2, //
        0.1, 0.2, 0.3, /* i1 */ -0.5, 0.4, 1.0, /* i2 */ 0.9, -0.9, 0.0, //
        /* i3 */ 0.0, 0.0, 0.0, /* i4 */ 2.0, 1.0, 0.1,
    ];
    let hyper = ModelHyper { embedding_dim: dim, ..Default::default() };
    let ds = dataset(&[(0, 2), (1, 0)], users, items);
    let model = RecModel::from_embeddings(ModelKind::BprMf, hyper, users, items, values.clone(), None).unwrap();
    let p = DMatrix::from_row_slice(users, dim, &values[..users * dim]);
    let q = DMatrix::from_row_slice(items, dim, &values[users * dim..]);
    let scores = &p * q.transpose();
    for u in 0..users {
        let mut oracle: Vec<usize> = (0..items).collect();
        oracle.sort_by(|&a, &b| scores[(u, b)].partial_cmp(&scores[(u, a)]).unwrap().then(a.cmp(&b)));
        let got: Vec<usize> = predict_topk(&model, u as u32, items, false, &ds)
            .unwrap()
            .into_iter()
            .map(|i| i as usize)
            .collect();
        assert_eq!(got, oracle);
        let seen = ds.user_items(u as u32);
        let got = predict_topk(&model, u as u32, 3, true, &ds).unwrap();
        let want: Vec<u32> = oracle
            .iter()
            .map(|&i| i as u32)
            .filter(|i| !seen.contains(i))
            .take(3)
            .collect();
        assert_eq!(got, want);
    }
}

#[test]
fn propagation_single_edge_and_identity() {
    let ds = dataset(&[(0, 0)], 1, 1);
    let hyper = ModelHyper { embedding_dim: 2, layers: 1, ..Default::default() };
    let values = vec![1.0, -2.0, 4.0, 0.5];
    let model = RecModel::from_embeddings(ModelKind::Lightgcn, hyper, 1, 1, values.clone(), Some(&ds)).unwrap();
    assert_eq!(lightgcn_propagate(&model, &ds, 0).unwrap(), values);
    // mean of layer 0 and layer 1, where layer 1 swaps the two rows
    let out = lightgcn_propagate(&model, &ds, 1).unwrap();
    assert_eq!(out, vec![2.5, -0.75, 2.5, -0.75]);
}

#[test]
fn removing_an_edge_only_touches_its_component() {
    // component A: users 0,1 with items 0,1; component B: user 2 with items 2,3
    let rows = [(0, 0), (0, 1), (1, 1), (2, 2), (2, 3)];
    let ds = dataset(&rows, 3, 4);
    let hyper = ModelHyper { embedding_dim: 2, layers: 3, ..Default::default() };
    let values: Vec<f64> = (0..14).map(|k| (k as f64 * 0.37).cos()).collect();
    let model = RecModel::from_embeddings(ModelKind::Lightgcn, hyper, 3, 4, values, Some(&ds)).unwrap();
    let before = lightgcn_propagate(&model, &ds, 3).unwrap();
    let pruned = apply_forget(&ds, &ForgetBatch::from_ids(&ds, [0]).unwrap()).unwrap();
    let after = lightgcn_propagate(&model, &pruned, 3).unwrap();
    let node = |n: usize| 2 * n..2 * n + 2;
    for b in [2, 3 + 2, 3 + 3] {
        assert_eq!(before[node(b)], after[node(b)], "node {b} is outside the edited component");
    }
    assert_ne!(before[node(0)], after[node(0)]);
    assert_ne!(before[node(3)], after[node(3)]);
}

#[test]
fn exact_unlearning_equals_retraining() {
    let mut rng = rng_from(&[2024]);
    for trial in 0..100 {
        let users = rng.random_range(2..30);
        let items = rng.random_range(2..25);
        let n = rng.random_range(1..=500);
        let ds = dataset(&random_rows(&mut rng, users, items, n), users, items);
        let ids: Vec<u32> = ds.train().iter().map(|r| r.id).filter(|_| rng.random_bool(0.3)).collect();
        let batch = ForgetBatch::from_ids(&ds, ids).unwrap();
        let remaining = apply_forget(&ds, &batch).unwrap();
        for kind in [ModelKind::Pop, ModelKind::ItemKnn] {
            let model = train(kind, &ds, &ModelHyper::default(), 1, trial).unwrap().bind(&ds).unwrap();
            let unlearned = exact_unlearn_counts(&model, &batch).unwrap();
            let retrained = train(kind, &remaining, &ModelHyper::default(), 1, trial)
                .unwrap()
                .bind(&remaining)
                .unwrap();
            assert_eq!(unlearned, retrained, "trial {trial} {kind}");
            let u = rng.random_range(0..users as u32);
            let a = unlearned.scorer().scores(u).unwrap();
            let b = retrained.scorer().scores(u).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn exact_unlearning_twice_underflows() {
    let ds = dataset(&[(0, 0), (0, 1)], 1, 2);
    let model = train(ModelKind::ItemKnn, &ds, &ModelHyper::default(), 1, 0).unwrap().bind(&ds).unwrap();
    let batch = ForgetBatch::from_ids(&ds, [0]).unwrap();
    let once = exact_unlearn_counts(&model, &batch).unwrap();
    assert!(exact_unlearn_counts(&once, &batch).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn topk_excludes_seen_for_every_user(
        rows in prop::collection::vec((0u32..6, 0u32..9), 1..40),
        kind_idx in 0usize..5,
        k in 1usize..12,
        seed in 0u64..1000,
    ) {
        let ds = dataset(&rows, 6, 9);
        let kind = ModelKind::ALL[kind_idx];
        let hyper = ModelHyper { embedding_dim: 4, batch_size: 8, ..Default::default() };
        let model = train(kind, &ds, &hyper, 2, seed).unwrap().bind(&ds).unwrap();
        let scorer = model.scorer();
        for u in 0..6u32 {
            let top = scorer.topk(u, k, true, &ds).unwrap();
            let eligible = 9 - ds.user_items(u).len();
            prop_assert_eq!(top.len(), k.min(eligible));
            prop_assert!(top.iter().all(|i| !ds.has_seen(u, *i)));
        }
    }

    #[test]
    fn loss_is_permutation_invariant(seed in 0u64..500, rot in 1usize..6) {
        let (model, samples, coeffs) = gradient_fixture(ModelKind::BprMf, seed);
        let mut s = samples.samples().to_vec();
        let mut c = coeffs.clone();
        let shift = rot % s.len();
        s.rotate_left(shift);
        c.rotate_left(shift);
        let (a, ga) = loss_grad(&model, &samples, &coeffs).unwrap();
        let (b, gb) = loss_grad(&model, &SampleSet::new(s).unwrap(), &c).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        let diff = DVector::from_vec(ga) - DVector::from_vec(gb);
        prop_assert!(diff.amax() <= 1e-12);
    }
}
