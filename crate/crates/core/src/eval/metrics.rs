//! Ranking metrics and unlearned-versus-retrained comparisons.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::RecModel;

/// Speedup at or above which an algorithm counts as deployable.
pub const DEPLOYABLE_SPEEDUP: f64 = 1e3;
/// RelEff at or above which an algorithm counts as deployable.
pub const DEPLOYABLE_REL_EFF: f64 = -0.01;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub ndcg: f64,
    pub recall: f64,
    pub hit: f64,
}

/// nDCG, recall and hit rate of the top `k` of `ranked`, with binary gains
/// and a `log₂(rank + 1)` discount. An empty relevant set scores zero.
pub fn ranking_metrics(ranked: &[u32], relevant: &BTreeSet<u32>, k: usize) -> Result<RankingMetrics> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    if relevant.is_empty() {
        return Ok(RankingMetrics::default());
    }
    let top = &ranked[..k.min(ranked.len())];
    let mut dcg = 0.0;
    let mut hits = 0usize;
    for (pos, item) in top.iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let idcg: f64 = (0..k.min(relevant.len())).map(|pos| 1.0 / ((pos + 2) as f64).log2()).sum();
    Ok(RankingMetrics {
        ndcg: dcg / idcg,
        recall: hits as f64 / relevant.len() as f64,
        hit: if hits > 0 { 1.0 } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityAtK {
    pub k: usize,
    #[serde(flatten)]
    pub metrics: RankingMetrics,
}

fn check_ks(ks: &[usize]) -> Result<usize> {
    match ks.iter().max() {
        Some(&m) if !ks.contains(&0) => Ok(m),
        _ => Err(Error::contract("need at least one k and every k ≥ 1")),
    }
}

fn check_vocab(model: &RecModel, dataset: &Dataset) -> Result<()> {
    if model.user_count() != dataset.user_count() || model.item_count() != dataset.item_count() {
        return Err(Error::contract("model and dataset vocabularies differ"));
    }
    Ok(())
}

/// Mean ranking metrics over users with a non-empty entry in `test`,
/// ranking with the dataset's current train items excluded.
pub fn utility(model: &RecModel, dataset: &Dataset, test: &[Vec<u32>], ks: &[usize]) -> Result<Vec<UtilityAtK>> {
    let kmax = check_ks(ks)?;
    check_vocab(model, dataset)?;
    if test.len() != dataset.user_count() {
        return Err(Error::contract("one test list per user is required"));
    }
    let scorer = model.scorer();
    let users: Vec<u32> = (0..test.len() as u32).filter(|&u| !test[u as usize].is_empty()).collect();
    let per_user: Vec<Vec<RankingMetrics>> = users
        .par_iter()
        .map(|&u| {
            let ranked = scorer.topk(u, kmax, true, dataset)?;
            let relevant: BTreeSet<u32> = test[u as usize].iter().copied().collect();
            ks.iter().map(|&k| ranking_metrics(&ranked, &relevant, k)).collect()
        })
        .collect::<Result<_>>()?;
    let n = users.len().max(1) as f64;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mut sum = RankingMetrics::default();
            for m in &per_user {
                sum.ndcg += m[j].ndcg;
                sum.recall += m[j].recall;
                sum.hit += m[j].hit;
            }
            UtilityAtK {
                k,
                metrics: RankingMetrics {
                    ndcg: sum.ndcg / n,
                    recall: sum.recall / n,
                    hit: sum.hit / n,
                },
            }
        })
        .collect())
}

/// Share of `users` with at least one of `items` in their top `k`.
pub fn sensitive_at_k(model: &RecModel, users: &BTreeSet<u32>, items: &BTreeSet<u32>, k: usize, dataset: &Dataset) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::contract("Sensitive@k needs at least one user"));
    }
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    check_vocab(model, dataset)?;
    if items.is_empty() {
        return Ok(0.0);
    }
    let scorer = model.scorer();
    let flags: Vec<bool> = users
        .par_iter()
        .map(|&u| Ok(scorer.topk(u, k, true, dataset)?.iter().any(|i| items.contains(i))))
        .collect::<Result<_>>()?;
    Ok(flags.iter().filter(|f| **f).count() as f64 / users.len() as f64)
}

/// `Sensitive@k(retrained) − Sensitive@k(unlearned)`.
pub fn rel_items(
    retrained: &RecModel,
    unlearned: &RecModel,
    users: &BTreeSet<u32>,
    items: &BTreeSet<u32>,
    k: usize,
    dataset: &Dataset,
) -> Result<f64> {
    Ok(sensitive_at_k(retrained, users, items, k, dataset)? - sensitive_at_k(unlearned, users, items, k, dataset)?)
}

/// `ndcg_unlearned / ndcg_retrained − 1`.
pub fn rel_eff_from(ndcg_unlearned: f64, ndcg_retrained: f64) -> Result<f64> {
    if !(ndcg_retrained > 0.0) {
        return Err(Error::UndefinedMetric("RelEff needs a positive retrained nDCG".into()));
    }
    Ok(ndcg_unlearned / ndcg_retrained - 1.0)
}

/// RelEff@k with nDCG averaged over the users with test items.
pub fn rel_eff(retrained: &RecModel, unlearned: &RecModel, k: usize, dataset: &Dataset, test: &[Vec<u32>]) -> Result<f64> {
    let r = utility(retrained, dataset, test, &[k])?[0].metrics.ndcg;
    let u = utility(unlearned, dataset, test, &[k])?[0].metrics.ndcg;
    rel_eff_from(u, r)
}

/// Retraining time over unlearning time.
pub fn speedup(retrain_seconds: f64, unlearn_total_seconds: f64) -> Result<f64> {
    if !(retrain_seconds > 0.0 && unlearn_total_seconds > 0.0) {
        return Err(Error::UndefinedMetric("speedup needs positive durations".into()));
    }
    Ok(retrain_seconds / unlearn_total_seconds)
}

pub fn deployable(speedup: f64, rel_eff: f64) -> bool {
    speedup >= DEPLOYABLE_SPEEDUP && rel_eff >= DEPLOYABLE_REL_EFF
}

/// Mean 1-based rank of the `targets` among each user's unseen items,
/// averaged over users and targets. Targets a user has seen are skipped.
pub fn mean_target_rank(model: &RecModel, users: &BTreeSet<u32>, targets: &[u32], dataset: &Dataset) -> Result<f64> {
    check_vocab(model, dataset)?;
    let scorer = model.scorer();
    let ranks: Vec<(f64, usize)> = users
        .par_iter()
        .map(|&u| {
            let scores = scorer.scores(u)?;
            let seen = dataset.user_items(u);
            let mut total = 0.0;
            let mut count = 0;
            for &t in targets {
                if seen.binary_search(&t).is_ok() {
                    continue;
                }
                let st = scores[t as usize];
                let better = (0..scores.len() as u32)
                    .filter(|i| seen.binary_search(i).is_err())
                    .filter(|&i| {
                        let s = scores[i as usize];
                        s > st || (s == st && i < t)
                    })
                    .count();
                total += (better + 1) as f64;
                count += 1;
            }
            Ok((total, count))
        })
        .collect::<Result<_>>()?;
    let (sum, n) = ranks.iter().fold((0.0, 0usize), |(s, n), (t, c)| (s + t, n + c));
    if n == 0 {
        return Err(Error::UndefinedMetric("no unseen target items to rank".into()));
    }
    Ok(sum / n as f64)
}
