//! Request generators for the sensitive-item and spam-removal scenarios,
//! and their on-disk artifact format.

mod artifact;
mod sensitive;
mod spam;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::ForgetBatch;
use crate::error::{Error, Result};

pub use artifact::{load_requests, save_requests, Manifest, ManifestBatch, MANIFEST_FILE};
pub use sensitive::{gen_sensitive_requests, SensitiveScenario, DEFAULT_SENSITIVE_BUDGET};
pub use spam::{batch_spam_requests, gen_spam_attack, SpamConfig, SpamScenario, DEFAULT_SPAM_BATCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Sensitive,
    Spam,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Sensitive => "sensitive",
            ScenarioKind::Spam => "spam",
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered, pairwise-disjoint forget batches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlearnRequestSequence {
    scenario: ScenarioKind,
    batches: Vec<ForgetBatch>,
}

impl UnlearnRequestSequence {
    pub fn new(scenario: ScenarioKind, batches: Vec<ForgetBatch>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (k, b) in batches.iter().enumerate() {
            for x in b.interactions() {
                if !seen.insert(x.id) {
                    return Err(Error::contract(format!(
                        "interaction {} appears again in batch {k}",
                        x.id
                    )));
                }
            }
        }
        Ok(Self { scenario, batches })
    }

    pub fn scenario(&self) -> ScenarioKind {
        self.scenario
    }

    pub fn batches(&self) -> &[ForgetBatch] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn total_interactions(&self) -> usize {
        self.batches.iter().map(|b| b.len()).sum()
    }

    /// Every owner of every batch.
    pub fn users(&self) -> BTreeSet<u32> {
        self.batches.iter().flat_map(|b| b.owners().iter().copied()).collect()
    }
}
