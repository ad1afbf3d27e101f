//! Integer count tables behind the popularity and ItemKNN baselines.
//!
//! ItemKNN uses cosine similarity over item interaction-count vectors:
//! `sim(i, j) = C_ij / √(S_i·S_j)` with `C_ij = Σ_u n_ui·n_uj` and
//! `S_i = Σ_u n_ui²`. All tables are integers so removing interactions yields
//! exactly the tables a rebuild would produce.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Interaction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTables {
    pub item_pop: Vec<u64>,
    /// Per user: item -> number of interactions. Empty for popularity models.
    pub user_counts: Vec<BTreeMap<u32, u64>>,
    /// Off-diagonal co-occurrence; zero entries are never stored.
    pub cooc: Vec<BTreeMap<u32, u64>>,
    pub sq_norm: Vec<u64>,
}

impl CountTables {
    pub fn build(ds: &Dataset, with_cooc: bool) -> Self {
        let mut item_pop = vec![0u64; ds.item_count()];
        for r in ds.train() {
            item_pop[r.item as usize] += 1;
        }
        if !with_cooc {
            return Self {
                item_pop,
                user_counts: Vec::new(),
                cooc: Vec::new(),
                sq_norm: Vec::new(),
            };
        }
        let mut user_counts = vec![BTreeMap::new(); ds.user_count()];
        for r in ds.train() {
            *user_counts[r.user as usize].entry(r.item).or_insert(0u64) += 1;
        }
        let mut cooc = vec![BTreeMap::new(); ds.item_count()];
        let mut sq_norm = vec![0u64; ds.item_count()];
        for counts in &user_counts {
            for (&i, &ni) in counts {
                sq_norm[i as usize] += ni * ni;
                for (&j, &nj) in counts {
                    if i != j {
                        *cooc[i as usize].entry(j).or_insert(0u64) += ni * nj;
                    }
                }
            }
        }
        Self {
            item_pop,
            user_counts,
            cooc,
            sq_norm,
        }
    }

    pub fn has_cooc(&self) -> bool {
        !self.sq_norm.is_empty()
    }

    /// Removes one interaction from every table.
    pub fn remove(&mut self, r: &Interaction) -> Result<()> {
        let underflow = || Error::contract(format!("count for interaction {} would drop below zero", r.id));
        let pop = self.item_pop.get_mut(r.item as usize).ok_or_else(underflow)?;
        *pop = pop.checked_sub(1).ok_or_else(underflow)?;
        if !self.has_cooc() {
            return Ok(());
        }
        let counts = self.user_counts.get_mut(r.user as usize).ok_or_else(underflow)?;
        let n = *counts.get(&r.item).ok_or_else(underflow)?;
        let i = r.item;
        for (&j, &nj) in counts.iter() {
            if j == i {
                continue;
            }
            for (a, b) in [(i, j), (j, i)] {
                let row = &mut self.cooc[a as usize];
                let c = row.get_mut(&b).ok_or_else(underflow)?;
                *c = c.checked_sub(nj).ok_or_else(underflow)?;
                if *c == 0 {
                    row.remove(&b);
                }
            }
        }
        self.sq_norm[i as usize] -= 2 * n - 1;
        if n == 1 {
            counts.remove(&i);
        } else {
            counts.insert(i, n - 1);
        }
        Ok(())
    }

    /// ItemKNN scores of every item for `user`.
    pub fn knn_scores(&self, user: u32) -> Vec<f64> {
        let mut scores = vec![0.0; self.item_pop.len()];
        let Some(counts) = self.user_counts.get(user as usize) else {
            return scores;
        };
        for (&i, &ni) in counts {
            let si = self.sq_norm[i as usize] as f64;
            for (&j, &c) in &self.cooc[i as usize] {
                let sj = self.sq_norm[j as usize] as f64;
                scores[j as usize] += ni as f64 * c as f64 / (si * sj).sqrt();
            }
        }
        scores
    }
}
