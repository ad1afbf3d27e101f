//! Recommenders with a uniform contract: training, top-k prediction, weighted
//! loss/gradient/HVP on arbitrary sample sets, and exact unlearning for the
//! count-based baselines.
//!
//! Gradient models keep two parameter segments, `user_embedding` and
//! `item_embedding`, which together form a node-major table with users first.
//! BPR-MF scores with the table directly; LightGCN scores with the layer mean
//! of the propagated table, so its loss derivatives are those of BPR-MF
//! pulled back through the (linear, symmetric) propagation operator.

mod bpr;
mod checkpoint;
mod counts;
mod graph;
mod optim;
mod samples;

use std::borrow::Cow;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ForgetBatch};
use crate::error::{Error, Result};
use crate::math::{derive_seed, name_hash, rng_from, ParamVector};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Provenance, CHECKPOINT_MAGIC};
pub use counts::CountTables;
pub use graph::PropagationGraph;
pub use optim::Adam;
pub use samples::{draw_unseen, Sample, SampleSet};

pub const USER_SEGMENT: &str = "user_embedding";
pub const ITEM_SEGMENT: &str = "item_embedding";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BprMf,
    Lightgcn,
    Pop,
    Random,
    ItemKnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::BprMf,
        ModelKind::Lightgcn,
        ModelKind::Pop,
        ModelKind::Random,
        ModelKind::ItemKnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BprMf => "bpr_mf",
            ModelKind::Lightgcn => "lightgcn",
            ModelKind::Pop => "pop",
            ModelKind::Random => "random",
            ModelKind::ItemKnn => "item_knn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }

    pub fn is_gradient_based(self) -> bool {
        matches!(self, ModelKind::BprMf | ModelKind::Lightgcn)
    }

    pub fn is_count_based(self) -> bool {
        matches!(self, ModelKind::Pop | ModelKind::ItemKnn)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelHyper {
    pub embedding_dim: usize,
    /// Propagation depth, LightGCN only.
    pub layers: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    pub init_std: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            embedding_dim: 32,
            layers: 2,
            learning_rate: 0.01,
            l2_reg: 1e-4,
            negatives_per_positive: 1,
            batch_size: 256,
            init_std: 0.1,
        }
    }
}

impl ModelHyper {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("embedding_dim and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::Config("l2_reg must be non-negative".into()));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config("init_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// A differentiable training objective over a flat parameter vector.
///
/// Losses are weighted sums `Σ c_s ℓ(s; θ)` over a sample set.
pub trait Objective {
    fn params(&self) -> &ParamVector;
    fn params_mut(&mut self) -> &mut ParamVector;
    fn loss_grad(&self, samples: &SampleSet, coeffs: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// `(H + damping·I)v` for the weighted loss.
    fn hvp(&self, samples: &SampleSet, coeffs: &[f64], v: &[f64], damping: f64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecModel {
    kind: ModelKind,
    hyper: ModelHyper,
    params: ParamVector,
    user_count: usize,
    item_count: usize,
    seed: u64,
    counts: Option<CountTables>,
    graph: Option<Arc<PropagationGraph>>,
}

impl RecModel {
    /// A gradient model with explicit embeddings, for fixtures and tests.
    pub fn from_embeddings(
        kind: ModelKind,
        hyper: ModelHyper,
        user_count: usize,
        item_count: usize,
        values: Vec<f64>,
        dataset: Option<&Dataset>,
    ) -> Result<Self> {
        if !kind.is_gradient_based() {
            return Err(Error::contract("explicit embeddings need a gradient model"));
        }
        let params = ParamVector::from_parts(&layout(user_count, item_count, hyper.embedding_dim), values)?;
        let mut m = Self {
            kind,
            hyper,
            params,
            user_count,
            item_count,
            seed: 0,
            counts: None,
            graph: None,
        };
        if kind == ModelKind::Lightgcn {
            let ds = dataset.ok_or_else(|| Error::contract("lightgcn needs a dataset for its graph"))?;
            m.rebind_graph(ds)?;
        }
        Ok(m)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn hyper(&self) -> &ModelHyper {
        &self.hyper
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counts(&self) -> Option<&CountTables> {
        self.counts.as_ref()
    }

    pub fn graph(&self) -> Option<&Arc<PropagationGraph>> {
        self.graph.as_ref()
    }

    /// Replaces the parameter values, keeping the layout.
    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.layout() != self.params.layout() {
            return Err(Error::contract("parameter layout mismatch"));
        }
        self.params = params;
        Ok(())
    }

    /// Rebuilds LightGCN's propagation graph from the current train set.
    /// No-op for other kinds.
    pub fn rebind_graph(&mut self, dataset: &Dataset) -> Result<()> {
        if self.kind == ModelKind::Lightgcn {
            self.check_vocab(dataset)?;
            self.graph = Some(Arc::new(PropagationGraph::from_dataset(dataset)));
        }
        Ok(())
    }

    /// A copy that propagates over `graph` instead of its own graph.
    pub fn with_graph(&self, graph: Arc<PropagationGraph>) -> Self {
        let mut out = self.clone();
        if self.kind == ModelKind::Lightgcn {
            out.graph = Some(graph);
        }
        out
    }

    fn check_vocab(&self, dataset: &Dataset) -> Result<()> {
        if dataset.user_count() != self.user_count || dataset.item_count() != self.item_count {
            return Err(Error::contract(format!(
                "model vocabulary {}x{} does not match dataset {}x{}",
                self.user_count,
                self.item_count,
                dataset.user_count(),
                dataset.item_count()
            )));
        }
        Ok(())
    }

    fn geometry(&self) -> bpr::Geometry {
        bpr::Geometry {
            users: self.user_count,
            items: self.item_count,
            dim: self.hyper.embedding_dim,
        }
    }

    fn require_gradient(&self) -> Result<()> {
        if self.kind.is_gradient_based() {
            Ok(())
        } else {
            Err(Error::contract(format!("{} has no differentiable loss", self.kind)))
        }
    }

    /// Apply the model's propagation operator (identity for BPR-MF).
    fn propagate<'a>(&self, x: &'a [f64]) -> Cow<'a, [f64]> {
        match (&self.graph, self.kind) {
            (Some(g), ModelKind::Lightgcn) => Cow::Owned(g.propagate(x, self.hyper.embedding_dim, self.hyper.layers)),
            _ => Cow::Borrowed(x),
        }
    }

    /// Embedding table used for scoring.
    pub fn final_embeddings(&self) -> Cow<'_, [f64]> {
        self.propagate(self.params.values())
    }

    /// Maps a gradient with respect to the final embeddings back to the raw
    /// parameters.
    pub fn pullback(&self, grad_final: &[f64]) -> Vec<f64> {
        self.propagate(grad_final).into_owned()
    }

    pub fn scorer(&self) -> Scorer<'_> {
        let embeddings = self.kind.is_gradient_based().then(|| self.final_embeddings());
        Scorer { model: self, embeddings }
    }
}

impl Objective for RecModel {
    fn params(&self) -> &ParamVector {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    fn loss_grad(&self, samples: &SampleSet, coeffs: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.require_gradient()?;
        let g = self.geometry();
        g.check(samples, coeffs)?;
        let raw = self.params.values();
        let mut grad_final = vec![0.0; raw.len()];
        if samples.is_empty() {
            return Ok((0.0, grad_final));
        }
        let emb = self.propagate(raw);
        let mut loss = bpr::loss_grad(&emb, g, samples, coeffs, &mut grad_final);
        let mut grad = self.propagate(&grad_final).into_owned();
        loss += bpr::reg_loss_grad(raw, g, samples, coeffs, self.hyper.l2_reg, &mut grad);
        Ok((loss, grad))
    }

    fn hvp(&self, samples: &SampleSet, coeffs: &[f64], v: &[f64], damping: f64) -> Result<Vec<f64>> {
        self.require_gradient()?;
        let g = self.geometry();
        g.check(samples, coeffs)?;
        if v.len() != self.params.len() {
            return Err(Error::contract(format!(
                "vector has length {} but the model has {} parameters",
                v.len(),
                self.params.len()
            )));
        }
        let mut out_final = vec![0.0; v.len()];
        if !samples.is_empty() {
            let emb = self.propagate(self.params.values());
            let v_final = self.propagate(v);
            bpr::hvp(&emb, g, samples, coeffs, &v_final, &mut out_final);
        }
        let mut out = self.propagate(&out_final).into_owned();
        bpr::reg_hvp(g, samples, coeffs, self.hyper.l2_reg, v, &mut out);
        if damping != 0.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o += damping * x;
            }
        }
        Ok(out)
    }
}

/// Scores items for users, caching propagated embeddings. Safe to share
/// across threads.
pub struct Scorer<'a> {
    model: &'a RecModel,
    embeddings: Option<Cow<'a, [f64]>>,
}

impl Scorer<'_> {
    /// Score of every item for `user`.
    pub fn scores(&self, user: u32) -> Result<Vec<f64>> {
        let m = self.model;
        if user as usize >= m.user_count {
            return Err(Error::contract(format!("unknown user index {user}")));
        }
        Ok(match m.kind {
            ModelKind::BprMf | ModelKind::Lightgcn => {
                let emb = self.embeddings.as_deref().expect("gradient models cache embeddings");
                let d = m.hyper.embedding_dim;
                let p = &emb[user as usize * d..(user as usize + 1) * d];
                (0..m.item_count)
                    .map(|i| {
                        let q = &emb[(m.user_count + i) * d..(m.user_count + i + 1) * d];
                        p.iter().zip(q).map(|(a, b)| a * b).sum()
                    })
                    .collect()
            }
            ModelKind::Pop => m.counts.as_ref().map_or_else(Vec::new, |c| c.item_pop.iter().map(|&n| n as f64).collect()),
            ModelKind::ItemKnn => m.counts.as_ref().map_or_else(Vec::new, |c| c.knn_scores(user)),
            ModelKind::Random => (0..m.item_count as u64)
                .map(|i| (derive_seed(&[m.seed, u64::from(user), i]) >> 11) as f64 / (1u64 << 53) as f64)
                .collect(),
        })
    }

    /// Top-`k` items by descending score, ties by ascending index.
    pub fn topk(&self, user: u32, k: usize, exclude_seen: bool, dataset: &Dataset) -> Result<Vec<u32>> {
        if k == 0 {
            return Err(Error::contract("k must be at least 1"));
        }
        let scores = self.scores(user)?;
        let seen = if exclude_seen { dataset.user_items(user) } else { &[] };
        let mut items: Vec<u32> = (0..scores.len() as u32)
            .filter(|i| seen.binary_search(i).is_err())
            .collect();
        let cmp = |a: &u32, b: &u32| scores[*b as usize].total_cmp(&scores[*a as usize]).then(a.cmp(b));
        if items.len() > k {
            items.select_nth_unstable_by(k - 1, cmp);
            items.truncate(k);
        }
        items.sort_by(cmp);
        Ok(items)
    }
}

pub fn predict_topk(model: &RecModel, user: u32, k: usize, exclude_seen: bool, dataset: &Dataset) -> Result<Vec<u32>> {
    model.scorer().topk(user, k, exclude_seen, dataset)
}

/// Layer-averaged LightGCN propagation of the model's raw embeddings over the
/// graph of `dataset`'s current train set.
pub fn lightgcn_propagate(model: &RecModel, dataset: &Dataset, layers: usize) -> Result<Vec<f64>> {
    model.require_gradient()?;
    model.check_vocab(dataset)?;
    let g = PropagationGraph::from_dataset(dataset);
    Ok(g.propagate(model.params.values(), model.hyper.embedding_dim, layers))
}

pub fn loss_grad(model: &RecModel, samples: &SampleSet, coeffs: &[f64]) -> Result<(f64, Vec<f64>)> {
    model.loss_grad(samples, coeffs)
}

pub fn hvp_apply(model: &RecModel, samples: &SampleSet, coeffs: &[f64], v: &[f64], damping: f64) -> Result<Vec<f64>> {
    model.hvp(samples, coeffs, v, damping)
}

fn layout(users: usize, items: usize, dim: usize) -> [(&'static str, usize); 2] {
    [(USER_SEGMENT, users * dim), (ITEM_SEGMENT, items * dim)]
}

/// The embeddings a gradient model starts training from. Deterministic in
/// `seed`, so the snapshot can be recreated after training.
pub fn initial_params(hyper: &ModelHyper, user_count: usize, item_count: usize, seed: u64) -> Result<ParamVector> {
    let mut params = ParamVector::zeros(&layout(user_count, item_count, hyper.embedding_dim))?;
    let normal = Normal::new(0.0, hyper.init_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng_from(&[seed, name_hash("init")]);
    for v in params.values_mut() {
        *v = normal.sample(&mut rng);
    }
    Ok(params)
}

/// Trains a model from scratch. `seed` fixes initialisation, shuffling and
/// negative sampling.
pub fn train(kind: ModelKind, dataset: &Dataset, hyper: &ModelHyper, epochs: usize, seed: u64) -> Result<Checkpoint> {
    if dataset.train().is_empty() {
        return Err(Error::Invalid("dataset has no train interactions".into()));
    }
    hyper.validate()?;
    let started = Instant::now();
    let (model, epoch_losses) = fit(kind, dataset, hyper, epochs, seed)?;
    let provenance = Provenance {
        trained_on: dataset.digest(),
        steps_applied: 0,
        wall_clock_train: started.elapsed().as_secs_f64(),
    };
    Ok(model.to_checkpoint(provenance, epoch_losses))
}

/// Training without the checkpoint wrapper; returns the bound model and the
/// mean loss of every epoch.
pub fn fit(kind: ModelKind, dataset: &Dataset, hyper: &ModelHyper, epochs: usize, seed: u64) -> Result<(RecModel, Vec<f64>)> {
    let mut model = RecModel {
        kind,
        hyper: *hyper,
        params: ParamVector::empty(),
        user_count: dataset.user_count(),
        item_count: dataset.item_count(),
        seed,
        counts: None,
        graph: None,
    };
    match kind {
        ModelKind::Random => return Ok((model, Vec::new())),
        ModelKind::Pop | ModelKind::ItemKnn => {
            model.counts = Some(CountTables::build(dataset, kind == ModelKind::ItemKnn));
            return Ok((model, Vec::new()));
        }
        ModelKind::BprMf | ModelKind::Lightgcn => {}
    }
    if epochs == 0 {
        return Err(Error::contract("gradient models need at least one epoch"));
    }
    if dataset.train().is_empty() {
        return Err(Error::Invalid("dataset has no train interactions".into()));
    }
    model.params = initial_params(hyper, model.user_count, model.item_count, seed)?;
    model.rebind_graph(dataset)?;

    let mut rng = rng_from(&[seed, name_hash("train")]);
    let mut opt = Adam::new(model.params.len(), hyper.learning_rate);
    let mut order: Vec<usize> = (0..dataset.train().len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(hyper.batch_size) {
            let rows: Vec<_> = chunk.iter().map(|&k| dataset.train()[k]).collect();
            let samples = SampleSet::from_interactions(dataset, &rows, hyper.negatives_per_positive, &mut rng);
            let coeffs = vec![1.0 / samples.len() as f64; samples.len()];
            let (loss, grad) = model.loss_grad(&samples, &coeffs)?;
            opt.step(model.params.values_mut(), &grad, None);
            total += loss * samples.len() as f64;
            count += samples.len();
        }
        losses.push(total / count.max(1) as f64);
    }
    if !model.params.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok((model, losses))
}

impl RecModel {
    pub fn to_checkpoint(&self, provenance: Provenance, epoch_losses: Vec<f64>) -> Checkpoint {
        Checkpoint {
            kind: self.kind,
            hyper: self.hyper,
            params: self.params.clone(),
            user_count: self.user_count,
            item_count: self.item_count,
            rng_seed: self.seed,
            provenance,
            epoch_losses,
        }
    }
}

/// Removes a batch from a count model. The result equals the model trained
/// from scratch on the remaining data. The random model has no data
/// dependence and is returned unchanged.
pub fn exact_unlearn_counts(model: &RecModel, batch: &ForgetBatch) -> Result<RecModel> {
    match model.kind {
        ModelKind::Random => Ok(model.clone()),
        ModelKind::Pop | ModelKind::ItemKnn => {
            let mut out = model.clone();
            let counts = out
                .counts
                .as_mut()
                .ok_or_else(|| Error::contract("count model has no tables"))?;
            for r in batch.interactions() {
                counts.remove(r)?;
            }
            Ok(out)
        }
        _ => Err(Error::contract(format!("{} is not a count-based model", model.kind))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interaction;
    use std::collections::BTreeSet;

    pub(crate) fn fixture(rows: &[(u32, u32)], users: usize, items: usize) -> Dataset {
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
            vec![Vec::new(); users],
            vec![None; items],
            BTreeSet::new(),
        )
        .unwrap()
    }

    fn hyper(dim: usize) -> ModelHyper {
        ModelHyper {
            embedding_dim: dim,
            layers: 2,
            l2_reg: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn random_model_trains_to_empty_params() {
        let ds = fixture(&[(0, 0)], 1, 2);
        let ck = train(ModelKind::Random, &ds, &ModelHyper::default(), 0, 3).unwrap();
        assert!(ck.params.is_empty());
        let m = ck.bind(&ds).unwrap();
        assert_eq!(predict_topk(&m, 0, 5, true, &ds).unwrap().len(), 1);
    }

    #[test]
    fn empty_train_is_error() {
        let ds = fixture(&[], 1, 2);
        assert!(train(ModelKind::Pop, &ds, &ModelHyper::default(), 1, 0).is_err());
    }

    #[test]
    fn separable_fixture_ranks_positive_first() {
        // one user, item 0 observed, item 1 never: BPR must push 0 above 1
        let ds = fixture(&[(0, 0)], 1, 2);
        let h = ModelHyper {
            embedding_dim: 4,
            learning_rate: 0.05,
            batch_size: 1,
            ..Default::default()
        };
        for kind in [ModelKind::BprMf, ModelKind::Lightgcn] {
            let m = train(kind, &ds, &h, 200, 5).unwrap().bind(&ds).unwrap();
            let s = m.scorer().scores(0).unwrap();
            assert!(s[0] > s[1], "{kind}: {s:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ds = fixture(&[(0, 0), (0, 1), (1, 1), (1, 2), (2, 0)], 3, 4);
        let h = hyper(3);
        for kind in [ModelKind::BprMf, ModelKind::Lightgcn] {
            let a = train(kind, &ds, &h, 3, 11).unwrap();
            let b = train(kind, &ds, &h, 3, 11).unwrap();
            assert_eq!(a.params, b.params);
            assert_eq!(a.epoch_losses, b.epoch_losses);
            assert_eq!(a.epoch_losses.len(), 3);
        }
    }

    #[test]
    fn pop_topk_excludes_seen() {
        let ds = fixture(&[(0, 0), (1, 0), (1, 1), (2, 2), (2, 0), (2, 1)], 3, 4);
        let m = train(ModelKind::Pop, &ds, &ModelHyper::default(), 1, 0).unwrap().bind(&ds).unwrap();
        assert_eq!(predict_topk(&m, 0, 2, false, &ds).unwrap(), vec![0, 1]);
        assert_eq!(predict_topk(&m, 0, 2, true, &ds).unwrap(), vec![1, 2]);
        assert_eq!(predict_topk(&m, 1, 5, true, &ds).unwrap(), vec![2, 3]);
    }

    #[test]
    fn equal_scores_break_by_index() {
        let ds = fixture(&[(0, 0)], 1, 4);
        let values = vec![1.0, /* items */ 0.5, 2.0, 2.0, 0.5];
        let h = ModelHyper { embedding_dim: 1, ..Default::default() };
        let m = RecModel::from_embeddings(ModelKind::BprMf, h, 1, 4, values, None).unwrap();
        for _ in 0..3 {
            assert_eq!(predict_topk(&m, 0, 4, false, &ds).unwrap(), vec![1, 2, 0, 3]);
        }
    }

    #[test]
    fn unknown_user_is_error() {
        let ds = fixture(&[(0, 0)], 1, 2);
        let m = train(ModelKind::Pop, &ds, &ModelHyper::default(), 1, 0).unwrap().bind(&ds).unwrap();
        assert!(predict_topk(&m, 7, 1, false, &ds).is_err());
        assert!(predict_topk(&m, 0, 0, false, &ds).is_err());
    }

    #[test]
    fn empty_sample_set_gives_zero_gradient() {
        let ds = fixture(&[(0, 0)], 1, 2);
        let m = train(ModelKind::BprMf, &ds, &hyper(2), 1, 0).unwrap().bind(&ds).unwrap();
        let (loss, grad) = m.loss_grad(&SampleSet::default(), &[]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn count_model_loss_is_contract_error() {
        let ds = fixture(&[(0, 0)], 1, 2);
        let m = train(ModelKind::Pop, &ds, &ModelHyper::default(), 1, 0).unwrap().bind(&ds).unwrap();
        assert!(matches!(m.loss_grad(&SampleSet::default(), &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn exact_unlearn_pop_decrements_once() {
        let ds = fixture(&[(0, 0), (1, 0), (1, 1)], 2, 2);
        let m = train(ModelKind::Pop, &ds, &ModelHyper::default(), 1, 0).unwrap().bind(&ds).unwrap();
        let batch = ForgetBatch::new(vec![ds.train()[0]]);
        let out = exact_unlearn_counts(&m, &batch).unwrap();
        assert_eq!(out.counts().unwrap().item_pop, vec![1, 1]);
        assert_eq!(exact_unlearn_counts(&m, &ForgetBatch::default()).unwrap(), m);
    }

    #[test]
    fn exact_unlearn_rejects_gradient_models() {
        let ds = fixture(&[(0, 0)], 1, 2);
        let m = train(ModelKind::BprMf, &ds, &hyper(2), 1, 0).unwrap().bind(&ds).unwrap();
        assert!(exact_unlearn_counts(&m, &ForgetBatch::default()).is_err());
    }
}
