//! Users ask to forget their interactions with items from sensitive
//! categories, one user per request.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{ScenarioKind, UnlearnRequestSequence};
use crate::data::{Dataset, ForgetBatch};
use crate::error::{Error, Result};

/// Fraction of the train set forgotten in total.
pub const DEFAULT_SENSITIVE_BUDGET: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveScenario {
    pub sensitive_categories: BTreeSet<String>,
    pub sensitive_items: BTreeSet<u32>,
    /// Selected users in request order.
    pub affected_users: Vec<u32>,
    pub requests: UnlearnRequestSequence,
    /// Per-user test items with sensitive items dropped for affected users.
    pub scrubbed_test: Vec<Vec<u32>>,
}

impl SensitiveScenario {
    pub fn affected_set(&self) -> BTreeSet<u32> {
        self.affected_users.iter().copied().collect()
    }
}

/// Shuffles the users with sensitive train interactions and takes them in
/// order until their combined sensitive interactions reach
/// `budget_fraction·|train|`.
pub fn gen_sensitive_requests<R: Rng + ?Sized>(
    dataset: &Dataset,
    sensitive_categories: &BTreeSet<String>,
    budget_fraction: f64,
    rng: &mut R,
) -> Result<SensitiveScenario> {
    if !(budget_fraction > 0.0 && budget_fraction <= 1.0) {
        return Err(Error::Config("sensitive budget fraction must lie in (0, 1]".into()));
    }
    let sensitive_items: BTreeSet<u32> = (0..dataset.item_count() as u32)
        .filter(|&i| dataset.category_of_item(i).is_some_and(|c| sensitive_categories.contains(c)))
        .collect();
    if sensitive_items.is_empty() {
        return Err(Error::Invalid(format!(
            "no item belongs to the sensitive categories {sensitive_categories:?}"
        )));
    }
    let mut candidates: Vec<u32> = (0..dataset.user_count() as u32)
        .filter(|&u| dataset.user_history(u).any(|x| sensitive_items.contains(&x.item)))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Invalid("no train interaction touches a sensitive item".into()));
    }
    candidates.shuffle(rng);

    let budget = budget_fraction * dataset.train().len() as f64;
    let mut batches = Vec::new();
    let mut affected = Vec::new();
    let mut total = 0usize;
    for u in candidates {
        if total as f64 >= budget - 1e-9 {
            break;
        }
        let rows: Vec<_> = dataset
            .user_history(u)
            .filter(|x| sensitive_items.contains(&x.item))
            .copied()
            .collect();
        total += rows.len();
        affected.push(u);
        batches.push(ForgetBatch::new(rows));
    }

    let affected_set: BTreeSet<u32> = affected.iter().copied().collect();
    let scrubbed_test = dataset
        .test()
        .iter()
        .enumerate()
        .map(|(u, items)| {
            if affected_set.contains(&(u as u32)) {
                items.iter().copied().filter(|i| !sensitive_items.contains(i)).collect()
            } else {
                items.clone()
            }
        })
        .collect();

    Ok(SensitiveScenario {
        sensitive_categories: sensitive_categories.clone(),
        sensitive_items,
        affected_users: affected,
        requests: UnlearnRequestSequence::new(ScenarioKind::Sensitive, batches)?,
        scrubbed_test,
    })
}
