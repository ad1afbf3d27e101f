//! Seeded synthetic interaction logs with latent taste clusters.
//!
//! Items are split into `clusters` equally sized groups, each tagged with the
//! category `cat<k>`. Every user has a home cluster and draws items with
//! probability proportional to a Zipf-like popularity weight, multiplied by
//! `cross_cluster_weight` for items outside the home cluster.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::log::{InteractionLog, RawInteraction};
use crate::error::{Error, Result};
use crate::math::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub min_per_user: usize,
    pub max_per_user: usize,
    pub cross_cluster_weight: f64,
    pub popularity_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 2_000,
            items: 500,
            clusters: 8,
            min_per_user: 10,
            max_per_user: 30,
            cross_cluster_weight: 0.05,
            popularity_exponent: 0.8,
            seed: 0,
        }
    }
}

pub fn category_name(cluster: usize) -> String {
    format!("cat{cluster}")
}

/// Home cluster of item `i`.
pub fn item_cluster(cfg: &SyntheticConfig, item: usize) -> usize {
    item * cfg.clusters / cfg.items
}

pub fn generate(cfg: &SyntheticConfig) -> Result<InteractionLog> {
    if cfg.users == 0 || cfg.items == 0 || cfg.clusters == 0 || cfg.clusters > cfg.items {
        return Err(Error::Invalid("synthetic config needs users, items >= clusters >= 1".into()));
    }
    if cfg.min_per_user == 0 || cfg.min_per_user > cfg.max_per_user || cfg.max_per_user > cfg.items {
        return Err(Error::Invalid("need 1 <= min_per_user <= max_per_user <= items".into()));
    }
    let mut rng = rng_from(&[cfg.seed, 0x5ee7]);

    // popularity rank is a random permutation so clusters mix popular and rare items
    let mut ranks: Vec<usize> = (0..cfg.items).collect();
    rand::seq::SliceRandom::shuffle(ranks.as_mut_slice(), &mut rng);
    let popularity: Vec<f64> = ranks
        .iter()
        .map(|&r| 1.0 / ((r + 1) as f64).powf(cfg.popularity_exponent))
        .collect();

    let per_cluster: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|c| {
            (0..cfg.items)
                .map(|i| {
                    let affinity = if item_cluster(cfg, i) == c {
                        1.0
                    } else {
                        cfg.cross_cluster_weight
                    };
                    popularity[i] * affinity
                })
                .collect()
        })
        .collect();

    let width = cfg.users.to_string().len();
    let item_width = cfg.items.to_string().len();
    let mut rows = Vec::new();
    for u in 0..cfg.users {
        let home = rng.random_range(0..cfg.clusters);
        let n = rng.random_range(cfg.min_per_user..=cfg.max_per_user);
        let mut weights = per_cluster[home].clone();
        let mut t0 = 1_600_000_000 + rng.random_range(0..86_400_i64);
        for _ in 0..n {
            let dist = WeightedIndex::new(&weights).map_err(|e| Error::Invalid(e.to_string()))?;
            let item = dist.sample(&mut rng);
            weights[item] = 0.0;
            t0 += rng.random_range(1..3_600_i64);
            rows.push(RawInteraction {
                user: format!("u{u:0width$}"),
                item: format!("i{item:0item_width$}"),
                timestamp: t0,
                category: Some(category_name(item_cluster(cfg, item))),
            });
        }
    }
    Ok(InteractionLog::new(rows))
}
