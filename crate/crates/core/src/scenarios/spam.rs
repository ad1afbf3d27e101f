//! Fabricated spam users that interleave low-popularity target items with
//! popular items, and their removal in fixed-size user batches.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ScenarioKind, UnlearnRequestSequence};
use crate::data::{Dataset, ForgetBatch, Interaction};
use crate::error::{Error, Result};

/// Spam users per removal request.
pub const DEFAULT_SPAM_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpamConfig {
    /// Injected interactions as a fraction of the clean train set.
    pub spam_fraction: f64,
    pub n_target_items: usize,
    /// Most popular items the fillers are drawn from.
    pub popular_pool_size: usize,
    /// Interactions per spam user (the last users may get fewer).
    pub session_length: usize,
}

impl Default for SpamConfig {
    fn default() -> Self {
        Self {
            spam_fraction: 0.01,
            n_target_items: 5,
            popular_pool_size: 50,
            session_length: 10,
        }
    }
}

impl SpamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spam_fraction > 0.0 && self.spam_fraction.is_finite()) {
            return Err(Error::Config("spam_fraction must be positive".into()));
        }
        if self.n_target_items == 0 || self.popular_pool_size == 0 || self.session_length < 2 {
            return Err(Error::Config(
                "n_target_items and popular_pool_size must be positive and session_length at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SpamScenario {
    pub poisoned_dataset: Dataset,
    pub spam_users: BTreeSet<u32>,
    pub target_items: Vec<u32>,
    pub injected: Vec<Interaction>,
}

fn popularity(dataset: &Dataset) -> Vec<usize> {
    let mut pop = vec![0usize; dataset.item_count()];
    for x in dataset.train() {
        pop[x.item as usize] += 1;
    }
    pop
}

/// Injects `⌈spam_fraction·|train|⌉` interactions from new users named
/// `spam_<n>`. Targets come from the bottom popularity quartile; each
/// session alternates a target with a popular filler, starting with a
/// target.
pub fn gen_spam_attack<R: Rng + ?Sized>(dataset: &Dataset, cfg: &SpamConfig, rng: &mut R) -> Result<SpamScenario> {
    cfg.validate()?;
    let n_items = dataset.item_count();
    if cfg.popular_pool_size > n_items {
        return Err(Error::Config(format!(
            "popular_pool_size {} exceeds the {n_items} items",
            cfg.popular_pool_size
        )));
    }
    let pop = popularity(dataset);
    let mut by_pop: Vec<u32> = (0..n_items as u32).collect();
    by_pop.sort_by_key(|&i| (pop[i as usize], i));

    let quartile = n_items.div_ceil(4).max(cfg.n_target_items);
    if quartile > n_items {
        return Err(Error::Config(format!("cannot pick {} targets from {n_items} items", cfg.n_target_items)));
    }
    let mut targets: Vec<u32> = by_pop[..quartile].choose_multiple(rng, cfg.n_target_items).copied().collect();
    targets.sort_unstable();
    let target_set: BTreeSet<u32> = targets.iter().copied().collect();
    let populars: Vec<u32> = by_pop
        .iter()
        .rev()
        .copied()
        .filter(|i| !target_set.contains(i))
        .take(cfg.popular_pool_size)
        .collect();
    if populars.is_empty() {
        return Err(Error::Config("no popular items remain besides the targets".into()));
    }

    let total = (cfg.spam_fraction * dataset.train().len() as f64 - 1e-9).ceil().max(1.0) as usize;
    let sessions = total.div_ceil(cfg.session_length).min(total / 2).max(1);
    let start_ts = dataset.train().iter().map(|x| x.timestamp).max().unwrap_or(0) + 1;

    let mut names = Vec::with_capacity(sessions);
    let mut rows = Vec::with_capacity(total);
    let mut ts = start_ts;
    for s in 0..sessions {
        let mut name = format!("spam_{s}");
        let mut bump = 0;
        while dataset.user_index(&name).is_some() {
            bump += 1;
            name = format!("spam_{s}_{bump}");
        }
        names.push(name);
        let len = total / sessions + usize::from(s < total % sessions);
        let mut t_order = targets.clone();
        t_order.shuffle(rng);
        let mut p_order = populars.clone();
        p_order.shuffle(rng);
        for k in 0..len {
            let item = if k % 2 == 0 {
                t_order[(k / 2) % t_order.len()]
            } else {
                p_order[(k / 2) % p_order.len()]
            };
            rows.push((s as u32, item, ts));
            ts += 1;
        }
    }
    let (poisoned, injected) = dataset.with_appended_users(names, rows)?;
    let spam_users = injected.iter().map(|x| x.user).collect();
    Ok(SpamScenario {
        poisoned_dataset: poisoned,
        spam_users,
        target_items: targets,
        injected,
    })
}

/// Splits the spam users, in shuffled order, into batches of `batch_size`
/// users; each batch holds all their interactions.
pub fn batch_spam_requests<R: Rng + ?Sized>(
    scenario: &SpamScenario,
    batch_size: usize,
    rng: &mut R,
) -> Result<UnlearnRequestSequence> {
    if batch_size == 0 {
        return Err(Error::Config("spam batch size must be at least 1".into()));
    }
    let mut users: Vec<u32> = scenario.spam_users.iter().copied().collect();
    users.shuffle(rng);
    let ds = &scenario.poisoned_dataset;
    let batches = users
        .chunks(batch_size)
        .map(|chunk| ForgetBatch::new(chunk.iter().flat_map(|&u| ds.user_history(u).copied()).collect()))
        .collect();
    UnlearnRequestSequence::new(ScenarioKind::Spam, batches)
}
