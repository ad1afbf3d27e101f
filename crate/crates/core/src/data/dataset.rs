//! Indexed datasets with train/test splits and forget-batch bookkeeping.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::log::{InteractionLog, RawInteraction};
use crate::error::{Error, Result};

/// Surrogate identifier of a train interaction, stable across forgetting.
pub type InteractionId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub id: InteractionId,
    pub user: u32,
    pub item: u32,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "fraction")]
pub enum Split {
    /// Each user's final interaction goes to test.
    LeaveLastOut,
    /// The last `⌈f·n_u⌉` interactions of each user go to test.
    TemporalFraction(f64),
}

/// An immutable, densely indexed interaction dataset.
///
/// Test lists never contain an item from the same user's train history: held
/// out interactions whose item re-occurs earlier in train are dropped.
#[derive(Debug, Clone)]
pub struct Dataset {
    users: Vec<String>,
    items: Vec<String>,
    user_lookup: HashMap<String, u32>,
    item_lookup: HashMap<String, u32>,
    train: Vec<Interaction>,
    test: Vec<Vec<u32>>,
    category_of_item: Vec<Option<String>>,
    sensitive_categories: BTreeSet<String>,
    original_train_len: usize,
    next_id: InteractionId,
    // derived from `train`
    user_rows: Vec<Vec<usize>>,
    user_items: Vec<Vec<u32>>,
}

impl Dataset {
    /// Assemble a dataset from already-indexed parts. Validates indices.
    pub fn from_parts(
        users: Vec<String>,
        items: Vec<String>,
        mut train: Vec<Interaction>,
        test: Vec<Vec<u32>>,
        category_of_item: Vec<Option<String>>,
        sensitive_categories: BTreeSet<String>,
    ) -> Result<Self> {
        if test.len() != users.len() || category_of_item.len() != items.len() {
            return Err(Error::contract("per-user or per-item tables have the wrong length"));
        }
        train.sort_by_key(|r| r.id);
        if train.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::contract("duplicate interaction ids"));
        }
        for r in &train {
            if r.user as usize >= users.len() || r.item as usize >= items.len() {
                return Err(Error::contract(format!("interaction {} out of vocab", r.id)));
            }
        }
        if test.iter().flatten().any(|&i| i as usize >= items.len()) {
            return Err(Error::contract("test item out of vocab"));
        }
        let user_lookup = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i as u32))
            .collect::<HashMap<_, _>>();
        let item_lookup = items
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i as u32))
            .collect::<HashMap<_, _>>();
        if user_lookup.len() != users.len() || item_lookup.len() != items.len() {
            return Err(Error::contract("raw ids must be unique"));
        }
        let next_id = train.last().map_or(0, |r| r.id + 1);
        let mut ds = Self {
            users,
            items,
            user_lookup,
            item_lookup,
            original_train_len: train.len(),
            train,
            test,
            category_of_item,
            sensitive_categories,
            next_id,
            user_rows: Vec::new(),
            user_items: Vec::new(),
        };
        ds.reindex();
        for (u, items) in ds.test.iter().enumerate() {
            if items.iter().any(|i| ds.has_seen(u as u32, *i)) {
                return Err(Error::contract(format!("user {u} has an item in both train and test")));
            }
        }
        Ok(ds)
    }

    fn reindex(&mut self) {
        let mut rows = vec![Vec::new(); self.users.len()];
        for (pos, r) in self.train.iter().enumerate() {
            rows[r.user as usize].push(pos);
        }
        self.user_items = rows
            .iter()
            .map(|rs| {
                let mut items: Vec<u32> = rs.iter().map(|&p| self.train[p].item).collect();
                items.sort_unstable();
                items.dedup();
                items
            })
            .collect();
        self.user_rows = rows;
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    /// Train interactions, sorted by id.
    pub fn train(&self) -> &[Interaction] {
        &self.train
    }

    pub fn test(&self) -> &[Vec<u32>] {
        &self.test
    }

    pub fn original_train_len(&self) -> usize {
        self.original_train_len
    }

    pub fn get(&self, id: InteractionId) -> Option<&Interaction> {
        self.train
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|p| &self.train[p])
    }

    /// Current train interactions of `user`, in id order.
    pub fn user_history(&self, user: u32) -> impl Iterator<Item = &Interaction> + '_ {
        self.user_rows[user as usize].iter().map(|&p| &self.train[p])
    }

    pub fn user_history_len(&self, user: u32) -> usize {
        self.user_rows[user as usize].len()
    }

    /// Sorted, de-duplicated items in the user's current train history.
    pub fn user_items(&self, user: u32) -> &[u32] {
        &self.user_items[user as usize]
    }

    pub fn has_seen(&self, user: u32, item: u32) -> bool {
        self.user_items[user as usize].binary_search(&item).is_ok()
    }

    pub fn raw_user(&self, user: u32) -> &str {
        &self.users[user as usize]
    }

    pub fn raw_item(&self, item: u32) -> &str {
        &self.items[item as usize]
    }

    pub fn user_index(&self, raw: &str) -> Option<u32> {
        self.user_lookup.get(raw).copied()
    }

    pub fn item_index(&self, raw: &str) -> Option<u32> {
        self.item_lookup.get(raw).copied()
    }

    pub fn category_of_item(&self, item: u32) -> Option<&str> {
        self.category_of_item[item as usize].as_deref()
    }

    pub fn categories(&self) -> &[Option<String>] {
        &self.category_of_item
    }

    pub fn sensitive_categories(&self) -> &BTreeSet<String> {
        &self.sensitive_categories
    }

    /// `I_s`: items whose category is sensitive.
    pub fn sensitive_items(&self) -> BTreeSet<u32> {
        self.category_of_item
            .iter()
            .enumerate()
            .filter(|(_, c)| c.as_ref().is_some_and(|c| self.sensitive_categories.contains(c)))
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn is_sensitive(&self, item: u32) -> bool {
        self.category_of_item[item as usize]
            .as_ref()
            .is_some_and(|c| self.sensitive_categories.contains(c))
    }

    pub fn with_sensitive_categories(&self, categories: BTreeSet<String>) -> Self {
        let mut out = self.clone();
        out.sensitive_categories = categories;
        out
    }

    pub fn with_test(&self, test: Vec<Vec<u32>>) -> Result<Self> {
        if test.len() != self.users.len() {
            return Err(Error::contract("test table must have one entry per user"));
        }
        let mut out = self.clone();
        out.test = test;
        Ok(out)
    }

    pub fn train_ids(&self) -> BTreeSet<InteractionId> {
        self.train.iter().map(|r| r.id).collect()
    }

    /// Appends new users and their train interactions. Used to inject
    /// fabricated users; test lists of new users are empty.
    pub fn with_appended_users(
        &self,
        raw_users: Vec<String>,
        interactions: Vec<(u32, u32, i64)>,
    ) -> Result<(Self, Vec<Interaction>)> {
        let base = self.users.len() as u32;
        let mut out = self.clone();
        for raw in raw_users {
            if out.user_lookup.contains_key(&raw) {
                return Err(Error::contract(format!("user {raw:?} already exists")));
            }
            out.user_lookup.insert(raw.clone(), out.users.len() as u32);
            out.users.push(raw);
            out.test.push(Vec::new());
        }
        let mut added = Vec::with_capacity(interactions.len());
        for (local_user, item, timestamp) in interactions {
            let user = base + local_user;
            if user as usize >= out.users.len() || item as usize >= out.items.len() {
                return Err(Error::contract("injected interaction out of vocab"));
            }
            let r = Interaction {
                id: out.next_id,
                user,
                item,
                timestamp,
            };
            out.next_id += 1;
            out.train.push(r);
            added.push(r);
        }
        out.original_train_len = out.train.len();
        out.reindex();
        Ok((out, added))
    }

    /// Content digest over vocabularies, train and test.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.users.len() as u64).to_le_bytes());
        h.update((self.items.len() as u64).to_le_bytes());
        for r in &self.train {
            h.update(r.id.to_le_bytes());
            h.update(r.user.to_le_bytes());
            h.update(r.item.to_le_bytes());
            h.update(r.timestamp.to_le_bytes());
        }
        for (u, items) in self.test.iter().enumerate() {
            h.update((u as u32).to_le_bytes());
            h.update((items.len() as u32).to_le_bytes());
            for i in items {
                h.update(i.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Raw-id rows for a set of train interactions, in id order.
    pub fn to_raw_rows<'a>(
        &'a self,
        interactions: impl IntoIterator<Item = &'a Interaction>,
    ) -> Vec<RawInteraction> {
        interactions
            .into_iter()
            .map(|r| RawInteraction {
                user: self.users[r.user as usize].clone(),
                item: self.items[r.item as usize].clone(),
                timestamp: r.timestamp,
                category: self.category_of_item[r.item as usize].clone(),
            })
            .collect()
    }

    /// Resolves raw rows back to train interactions. Duplicate rows map to
    /// distinct ids in id order.
    pub fn resolve_rows(&self, rows: &[RawInteraction]) -> Result<Vec<Interaction>> {
        let mut by_key: BTreeMap<(u32, u32, i64), Vec<InteractionId>> = BTreeMap::new();
        for r in &self.train {
            by_key
                .entry((r.user, r.item, r.timestamp))
                .or_default()
                .push(r.id);
        }
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let user = self
                .user_index(&row.user)
                .ok_or_else(|| Error::contract(format!("unknown user {:?}", row.user)))?;
            let item = self
                .item_index(&row.item)
                .ok_or_else(|| Error::contract(format!("unknown item {:?}", row.item)))?;
            let ids = by_key
                .get_mut(&(user, item, row.timestamp))
                .filter(|ids| !ids.is_empty())
                .ok_or_else(|| {
                    Error::contract(format!(
                        "row ({}, {}, {}) is not in the train set",
                        row.user, row.item, row.timestamp
                    ))
                })?;
            let id = ids.remove(0);
            out.push(*self.get(id).expect("id from train"));
        }
        out.sort_by_key(|r| r.id);
        Ok(out)
    }

    pub(crate) fn without(&self, remove: &BTreeSet<InteractionId>) -> Self {
        let mut out = self.clone();
        out.train.retain(|r| !remove.contains(&r.id));
        out.reindex();
        out
    }
}

/// Filters, reindexes and splits a raw log.
pub fn build_dataset(
    log: &InteractionLog,
    split: Split,
    min_interactions: usize,
    sensitive_categories: BTreeSet<String>,
) -> Result<Dataset> {
    if matches!(split, Split::LeaveLastOut) && min_interactions < 2 {
        return Err(Error::contract("leave_last_out needs min_interactions >= 2"));
    }
    if let Split::TemporalFraction(f) = split {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::contract("temporal fraction must lie in (0, 1]"));
        }
    }
    let mut log = log.clone();
    log.canonicalize();

    let mut per_user: BTreeMap<&str, Vec<&RawInteraction>> = BTreeMap::new();
    for r in &log.rows {
        per_user.entry(r.user.as_str()).or_default().push(r);
    }
    per_user.retain(|_, rows| rows.len() >= min_interactions.max(1));
    if per_user.is_empty() {
        return Err(Error::Invalid(format!(
            "no user has at least {min_interactions} interactions"
        )));
    }

    let users: Vec<String> = per_user.keys().map(|u| u.to_string()).collect();
    let mut item_set: BTreeMap<&str, Option<String>> = BTreeMap::new();
    for rows in per_user.values() {
        for r in rows {
            let slot = item_set.entry(r.item.as_str()).or_insert(None);
            if slot.is_none() {
                slot.clone_from(&r.category);
            }
        }
    }
    let items: Vec<String> = item_set.keys().map(|i| i.to_string()).collect();
    let item_index: HashMap<&str, u32> = item_set
        .keys()
        .enumerate()
        .map(|(i, k)| (*k, i as u32))
        .collect();
    let category_of_item: Vec<Option<String>> = item_set.into_values().collect();

    let mut train = Vec::new();
    let mut test = Vec::with_capacity(users.len());
    let mut next_id: InteractionId = 0;
    for (u, rows) in per_user.values().enumerate() {
        let n = rows.len();
        let n_test = match split {
            Split::LeaveLastOut => 1,
            Split::TemporalFraction(f) => ((f * n as f64) - 1e-9).ceil().max(0.0) as usize,
        }
        .min(n);
        let (train_rows, test_rows) = rows.split_at(n - n_test);
        let mut seen = BTreeSet::new();
        for r in train_rows {
            let item = item_index[r.item.as_str()];
            seen.insert(item);
            train.push(Interaction {
                id: next_id,
                user: u as u32,
                item,
                timestamp: r.timestamp,
            });
            next_id += 1;
        }
        let mut held: Vec<u32> = Vec::new();
        for r in test_rows {
            let item = item_index[r.item.as_str()];
            if !seen.contains(&item) && !held.contains(&item) {
                held.push(item);
            }
        }
        test.push(held);
    }

    Dataset::from_parts(users, items, train, test, category_of_item, sensitive_categories)
}
