//! Forget batches, pure dataset subtraction and per-step retain sampling.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Interaction, InteractionId};
use crate::error::{Error, Result};

/// One unlearning request: a set of train interactions and their owners.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetBatch {
    interactions: Vec<Interaction>,
    owners: BTreeSet<u32>,
}

impl ForgetBatch {
    pub fn new(mut interactions: Vec<Interaction>) -> Self {
        interactions.sort_by_key(|r| r.id);
        interactions.dedup_by_key(|r| r.id);
        let owners = interactions.iter().map(|r| r.user).collect();
        Self {
            interactions,
            owners,
        }
    }

    pub fn from_ids(dataset: &Dataset, ids: impl IntoIterator<Item = InteractionId>) -> Result<Self> {
        let rows = ids
            .into_iter()
            .map(|id| {
                dataset
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::contract(format!("interaction {id} is not in train")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(rows))
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn owners(&self) -> &BTreeSet<u32> {
        &self.owners
    }

    pub fn ids(&self) -> BTreeSet<InteractionId> {
        self.interactions.iter().map(|r| r.id).collect()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }
}

/// Returns `dataset` with the batch removed from train. Test data is left
/// untouched and the input is not modified.
pub fn apply_forget(dataset: &Dataset, batch: &ForgetBatch) -> Result<Dataset> {
    if batch.is_empty() {
        return Ok(dataset.clone());
    }
    for r in batch.interactions() {
        match dataset.get(r.id) {
            Some(found) if found == r => {}
            _ => {
                return Err(Error::contract(format!(
                    "forget batch references interaction {} which is not in the current train set",
                    r.id
                )))
            }
        }
    }
    Ok(dataset.without(&batch.ids()))
}

/// Complete user histories drawn for one unlearning step.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainSample {
    pub interactions: Vec<Interaction>,
    /// Users included, in sampling order.
    pub users: Vec<u32>,
    /// The effective interaction cap applied.
    pub cap_used: usize,
}

/// Samples whole user histories, skipping `unlearned_users`, until adding the
/// next user would exceed `min(cap, ⌊frac_cap·|original train|⌋)`.
pub fn sample_retain<R: Rng + ?Sized>(
    dataset: &Dataset,
    unlearned_users: &BTreeSet<u32>,
    cap: Option<usize>,
    frac_cap: f64,
    rng: &mut R,
) -> Result<RetainSample> {
    if !(frac_cap > 0.0 && frac_cap <= 1.0) {
        return Err(Error::contract("frac_cap must lie in (0, 1]"));
    }
    let frac_limit = (frac_cap * dataset.original_train_len() as f64 + 1e-9).floor() as usize;
    let limit = cap.unwrap_or(usize::MAX).min(frac_limit);

    let mut candidates: Vec<u32> = (0..dataset.user_count() as u32)
        .filter(|u| !unlearned_users.contains(u) && dataset.user_history_len(*u) > 0)
        .collect();
    candidates.shuffle(rng);

    let mut out = RetainSample {
        cap_used: limit,
        ..Default::default()
    };
    for u in candidates {
        let n = dataset.user_history_len(u);
        if out.interactions.len() + n > limit {
            break;
        }
        out.interactions.extend(dataset.user_history(u).copied());
        out.users.push(u);
    }
    Ok(out)
}
