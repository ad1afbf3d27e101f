//! Training triples for pairwise ranking losses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Interaction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub user: u32,
    pub positive: u32,
    pub negative: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    samples: Vec<Sample>,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.negative == Some(s.positive)) {
            return Err(Error::contract(format!(
                "sample for user {} uses item {} as both positive and negative",
                s.user, s.positive
            )));
        }
        Ok(Self { samples })
    }

    /// One triple per `(interaction, negative draw)`. Negatives are uniform
    /// over the items the user has not interacted with in `dataset`; a user
    /// who has seen every item gets samples without a negative.
    pub fn from_interactions<R: Rng + ?Sized>(
        dataset: &Dataset,
        rows: &[Interaction],
        negatives_per_positive: usize,
        rng: &mut R,
    ) -> Self {
        let mut samples = Vec::with_capacity(rows.len() * negatives_per_positive.max(1));
        for r in rows {
            if negatives_per_positive == 0 {
                samples.push(Sample {
                    user: r.user,
                    positive: r.item,
                    negative: None,
                });
                continue;
            }
            for _ in 0..negatives_per_positive {
                samples.push(Sample {
                    user: r.user,
                    positive: r.item,
                    negative: draw_unseen(dataset, r.user, r.item, rng),
                });
            }
        }
        Self { samples }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn extend(&mut self, other: &SampleSet) {
        self.samples.extend_from_slice(&other.samples);
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.negative == Some(sample.positive) {
            return Err(Error::contract("negative item equals positive item"));
        }
        self.samples.push(sample);
        Ok(())
    }
}

/// Uniform draw from the items `user` has not interacted with, excluding
/// `avoid`. `None` when no such item exists.
pub fn draw_unseen<R: Rng + ?Sized>(dataset: &Dataset, user: u32, avoid: u32, rng: &mut R) -> Option<u32> {
    let n = dataset.item_count() as u32;
    let seen = dataset.user_items(user);
    let blocked = seen.len() as u32 + u32::from(seen.binary_search(&avoid).is_err());
    if blocked >= n {
        return None;
    }
    // rejection sampling is fast while histories are short relative to the catalogue
    if (seen.len() as u32) * 2 < n {
        loop {
            let j = rng.random_range(0..n);
            if j != avoid && seen.binary_search(&j).is_err() {
                return Some(j);
            }
        }
    }
    let mut k = rng.random_range(0..n - blocked);
    for j in 0..n {
        if j == avoid || seen.binary_search(&j).is_ok() {
            continue;
        }
        if k == 0 {
            return Some(j);
        }
        k -= 1;
    }
    None
}
