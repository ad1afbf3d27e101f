use std::collections::BTreeSet;

use erasebench::data::synthetic::{generate, SyntheticConfig};
use erasebench::data::{build_dataset, Dataset, Interaction, Split};
use erasebench::eval::{
    build_report, mean_target_rank, ranking_metrics, rel_eff, rel_items, sensitive_at_k, utility, ReportInput,
    SensitiveTarget, UnlearnedRun,
};
use erasebench::math::rng_from;
use erasebench::models::{fit, ModelHyper, ModelKind, RecModel};
use erasebench::scenarios::{gen_spam_attack, SpamConfig};
use erasebench::unlearn::{run_sequence, AlgoConfig, Algorithm, DivergencePolicy, RunHooks, StepStatus};
use proptest::prelude::*;
use rand::Rng;

fn dataset(rows: &[(u32, u32)], users: usize, items: usize, test: Vec<Vec<u32>>) -> Dataset {
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
        (0..users).map(|u| format!("u{u}")).collect(),
        (0..items).map(|i| format!("i{i}")).collect(),
        train,
        test,
        vec![None; items],
        BTreeSet::new(),
    )
    .unwrap()
}

fn random_model(rng: &mut impl Rng, users: usize, items: usize) -> RecModel {
    let hyper = ModelHyper {
        embedding_dim: 3,
        ..Default::default()
    };
    let values = (0..(users + items) * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    RecModel::from_embeddings(ModelKind::BprMf, hyper, users, items, values, None).unwrap()
}

fn synthetic(seed: u64, users: usize, items: usize) -> Dataset {
    let log = generate(&SyntheticConfig {
        users,
        items,
        clusters: 4,
        min_per_user: 8,
        max_per_user: 16,
        seed,
        ..Default::default()
    })
    .unwrap();
    build_dataset(&log, Split::LeaveLastOut, 2, BTreeSet::from(["cat0".to_string()])).unwrap()
}

proptest! {
    #[test]
    fn metrics_grow_with_k(ranked in Just((0u32..30).collect::<Vec<_>>()).prop_shuffle(),
                           relevant in proptest::collection::btree_set(0u32..30, 0..8)) {
        let mut prev = ranking_metrics(&ranked, &relevant, 1).unwrap();
        for k in 2..=30 {
            let m = ranking_metrics(&ranked, &relevant, k).unwrap();
            prop_assert!(m.recall >= prev.recall && m.hit >= prev.hit);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m.ndcg));
            prev = m;
        }
    }
}

#[test]
fn sensitive_share_of_two_users() {
    // user 0 prefers item 0 (sensitive), user 1 prefers item 2
    let hyper = ModelHyper {
        embedding_dim: 2,
        ..Default::default()
    };
    let values = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.5, 0.0, 1.0];
    let model = RecModel::from_embeddings(ModelKind::BprMf, hyper, 2, 3, values, None).unwrap();
    let ds = dataset(&[(0, 1), (1, 1)], 2, 3, vec![vec![], vec![]]);
    let users = BTreeSet::from([0, 1]);
    assert_eq!(sensitive_at_k(&model, &users, &BTreeSet::from([0]), 1, &ds).unwrap(), 0.5);
    assert_eq!(sensitive_at_k(&model, &users, &BTreeSet::new(), 1, &ds).unwrap(), 0.0);
    assert!(sensitive_at_k(&model, &BTreeSet::new(), &BTreeSet::from([0]), 1, &ds).is_err());
}

#[test]
fn effectiveness_bounds_and_identities() {
    let mut rng = rng_from(&[1]);
    for _ in 0..100 {
        let (users, items) = (6, 12);
        let rows: Vec<(u32, u32)> = (0..users as u32).flat_map(|u| [(u, u), (u, u + 6)]).collect();
        let test = (0..users).map(|u| vec![((u + 1) % 6) as u32]).collect();
        let ds = dataset(&rows, users, items, test);
        let a = random_model(&mut rng, users, items);
        let b = random_model(&mut rng, users, items);
        let us: BTreeSet<u32> = (0..rng.random_range(1..=users as u32)).collect();
        let is: BTreeSet<u32> = (0..items as u32).filter(|_| rng.random_bool(0.3)).collect();
        for k in [1, 3, 5] {
            let s = sensitive_at_k(&a, &us, &is, k, &ds).unwrap();
            assert!((0.0..=1.0).contains(&s));
            let r = rel_items(&a, &b, &us, &is, k, &ds).unwrap();
            assert!((-1.0..=1.0).contains(&r));
            assert_eq!(rel_items(&a, &a, &us, &is, k, &ds).unwrap(), 0.0);
            if let Ok(e) = rel_eff(&a, &a, k, &ds, ds.test()) {
                assert_eq!(e, 0.0);
            }
            if let Ok(e) = rel_eff(&a, &b, k, &ds, ds.test()) {
                assert!(e >= -1.0);
            }
        }
    }
}

#[test]
fn utility_is_invariant_to_user_order() {
    let ds = synthetic(2, 80, 30);
    let (model, _) = fit(ModelKind::BprMf, &ds, &ModelHyper { embedding_dim: 4, ..Default::default() }, 3, 0).unwrap();
    let base = utility(&model, &ds, ds.test(), &[5, 10]).unwrap();

    // reverse the user indices in both the data and the embedding table
    let n = ds.user_count() as u32;
    let rows: Vec<(u32, u32)> = ds.train().iter().map(|x| (n - 1 - x.user, x.item)).collect();
    let test: Vec<Vec<u32>> = (0..n).rev().map(|u| ds.test()[u as usize].clone()).collect();
    let flipped = dataset(&rows, ds.user_count(), ds.item_count(), test);
    let d = 4;
    let p = model.params().values();
    let mut values = Vec::with_capacity(p.len());
    for u in (0..n as usize).rev() {
        values.extend_from_slice(&p[u * d..(u + 1) * d]);
    }
    values.extend_from_slice(&p[n as usize * d..]);
    let other = RecModel::from_embeddings(ModelKind::BprMf, model.hyper().clone(), ds.user_count(), ds.item_count(), values, None)
        .unwrap();
    let again = utility(&other, &flipped, flipped.test(), &[5, 10]).unwrap();
    for (a, b) in base.iter().zip(&again) {
        assert!((a.metrics.ndcg - b.metrics.ndcg).abs() < 1e-12);
        assert!((a.metrics.recall - b.metrics.recall).abs() < 1e-12);
        assert!((a.metrics.hit - b.metrics.hit).abs() < 1e-12);
    }
}

#[test]
fn reports_follow_the_trajectory_status() {
    let ds = synthetic(3, 80, 30);
    let hyper = ModelHyper {
        embedding_dim: 4,
        ..Default::default()
    };
    let (model, _) = fit(ModelKind::Lightgcn, &ds, &hyper, 3, 0).unwrap();
    let users = BTreeSet::from([0u32, 1, 2]);
    let items = ds.sensitive_items();

    let empty = run_sequence(&model, &ds, &[], &AlgoConfig::default(), DivergencePolicy::Continue, 0, &RunHooks::default()).unwrap();
    let records = empty.records();
    let report = build_report(&ReportInput {
        run: UnlearnedRun::new(&empty, &records),
        retrained: &model,
        test: ds.test(),
        sensitive: Some(SensitiveTarget { users: &users, items: &items }),
        scenario: None,
        retrain_seconds: 1.0,
        ks: &[10, 20],
        seed: 0,
    })
    .unwrap();
    assert_eq!(report.status, StepStatus::Ok);
    for m in &report.per_k {
        assert_eq!(m.rel_eff, Some(0.0));
        assert_eq!(m.rel_items, Some(0.0));
        let (r, u) = (m.sensitive_retrained.unwrap(), m.sensitive_unlearned.unwrap());
        assert_eq!(m.rel_items.unwrap(), r - u);
        assert_eq!(m.rel_eff.unwrap(), m.unlearned.unwrap().ndcg / m.retrained.ndcg - 1.0);
    }
    assert_eq!(report.timing.speedup, None);

    let batch = erasebench::data::ForgetBatch::new(ds.user_history(0).take(2).copied().collect());
    let gif = AlgoConfig::for_algorithm(Algorithm::Gif);
    let hooks = RunHooks { nan_at: Some((0, 1)) };
    let t = run_sequence(&model, &ds, &[batch], &gif, DivergencePolicy::Continue, 0, &hooks).unwrap();
    let records = t.records();
    let report = build_report(&ReportInput {
        run: UnlearnedRun::new(&t, &records),
        retrained: &model,
        test: ds.test(),
        sensitive: Some(SensitiveTarget { users: &users, items: &items }),
        scenario: None,
        retrain_seconds: 1.0,
        ks: &[20],
        seed: 0,
    })
    .unwrap();
    assert_eq!(report.status, StepStatus::Diverged);
    let m = report.at(20).unwrap();
    assert!(m.unlearned.is_none() && m.rel_eff.is_none() && m.rel_items.is_none());
    assert!(m.sensitive_retrained.is_some());
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"diverged\""));
}

#[test]
fn spam_promotes_targets() {
    let clean = synthetic(5, 300, 80);
    let cfg = SpamConfig {
        spam_fraction: 0.05,
        popular_pool_size: 10,
        n_target_items: 3,
        ..Default::default()
    };
    let s = gen_spam_attack(&clean, &cfg, &mut rng_from(&[9])).unwrap();
    let hyper = ModelHyper {
        embedding_dim: 8,
        ..Default::default()
    };
    let (clean_model, _) = fit(ModelKind::BprMf, &clean, &hyper, 10, 1).unwrap();
    let (poisoned_model, _) = fit(ModelKind::BprMf, &s.poisoned_dataset, &hyper, 10, 1).unwrap();
    let users: BTreeSet<u32> = (0..clean.user_count() as u32).collect();
    let before = mean_target_rank(&clean_model, &users, &s.target_items, &clean).unwrap();
    // spam users are appended, so clean users keep their indices
    let after = mean_target_rank(&poisoned_model, &users, &s.target_items, &s.poisoned_dataset).unwrap();
    assert!(after < before, "{after} !< {before}");
}
