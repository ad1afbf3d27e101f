//! Fanchuan: push forget users' score distributions towards uniform, then
//! alternate contrastive separation from retain users with repair
//! fine-tuning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::common::{fine_tune, mask_scale, StepContext, Tune};
use super::config::{AlgoConfig, Algorithm};
use super::outcome::{Diagnostics, StepOutcome, StepStatus};
use crate::error::{Error, Result};
use crate::math::{derive_seed, name_hash};
use crate::models::{Objective, RecModel, SampleSet};

/// Fixed batches served in a reshuffled order each pass, so every batch is
/// drawn once before any batch is drawn again.
#[derive(Debug, Clone)]
pub struct ShuffledPool<T> {
    batches: Vec<Vec<T>>,
    order: Vec<usize>,
    next: usize,
    rng: ChaCha8Rng,
}

impl<T> ShuffledPool<T> {
    pub fn new(mut items: Vec<T>, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::contract("pool batch size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        items.shuffle(&mut rng);
        let mut batches = Vec::new();
        let mut rest = items.into_iter().peekable();
        while rest.peek().is_some() {
            batches.push(rest.by_ref().take(batch_size).collect());
        }
        Ok(Self {
            order: Vec::new(),
            next: 0,
            batches,
            rng,
        })
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    /// The next batch, or `None` for an empty pool.
    pub fn draw(&mut self) -> Option<&[T]> {
        if self.batches.is_empty() {
            return None;
        }
        if self.next == self.order.len() {
            self.order = (0..self.batches.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.next = 0;
        }
        let b = self.order[self.next];
        self.next += 1;
        Some(&self.batches[b])
    }
}

fn distinct_users(samples: &SampleSet) -> Vec<u32> {
    let mut users: Vec<u32> = samples.iter().map(|s| s.user).collect();
    users.sort_unstable();
    users.dedup();
    users
}

fn row(table: &[f64], node: usize, dim: usize) -> &[f64] {
    &table[node * dim..(node + 1) * dim]
}

/// Mean over `users` of `KL(softmax(scores_u) ‖ uniform)` with its gradient
/// with respect to the raw parameters.
pub fn kl_to_uniform(model: &RecModel, users: &[u32]) -> Result<(f64, Vec<f64>)> {
    if !model.kind().is_gradient_based() {
        return Err(Error::contract("kl_to_uniform needs an embedding model"));
    }
    let dim = model.hyper().embedding_dim;
    let (nu, ni) = (model.user_count(), model.item_count());
    let emb = model.final_embeddings();
    let mut grad = vec![0.0; emb.len()];
    if users.is_empty() {
        return Ok((0.0, grad));
    }
    let w = 1.0 / users.len() as f64;
    let mut total = 0.0;
    for &u in users {
        if u as usize >= nu {
            return Err(Error::contract(format!("user {u} is out of range")));
        }
        let p_u = row(&emb, u as usize, dim);
        let scores: Vec<f64> = (0..ni).map(|i| crate::math::dot(p_u, row(&emb, nu + i, dim))).collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        let logp: Vec<f64> = scores.iter().map(|s| s - max - z.ln()).collect();
        let entropy_neg: f64 = logp.iter().map(|l| l.exp() * l).sum();
        total += w * (entropy_neg + (ni as f64).ln());
        for (i, l) in logp.iter().enumerate() {
            let gs = w * l.exp() * (l - entropy_neg);
            let q = nu + i;
            for k in 0..dim {
                grad[u as usize * dim + k] += gs * emb[q * dim + k];
                grad[q * dim + k] += gs * p_u[k];
            }
        }
    }
    Ok((total, model.pullback(&grad)))
}

fn cosine_with_grad(f: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
    let nf = crate::math::norm(f).max(1e-12);
    let nx = crate::math::norm(x).max(1e-12);
    let c = crate::math::dot(f, x) / (nf * nx);
    let g = f.iter().zip(x).map(|(fk, xk)| xk / (nf * nx) - c * fk / (nf * nf)).collect();
    (c, g)
}

/// Mean InfoNCE loss over `users`: each user's representation should stay
/// closest to its own `anchors` row among `negatives`. Gradient flows only
/// through the current user rows.
fn contrastive(model: &RecModel, users: &[u32], anchors: &[Vec<f64>], negatives: &[Vec<f64>], temperature: f64) -> (f64, Vec<f64>) {
    let dim = model.hyper().embedding_dim;
    let emb = model.final_embeddings();
    let mut grad = vec![0.0; emb.len()];
    let w = 1.0 / users.len() as f64;
    let mut total = 0.0;
    for (&u, anchor) in users.iter().zip(anchors) {
        let f = row(&emb, u as usize, dim);
        let mut terms: Vec<(f64, Vec<f64>)> = vec![cosine_with_grad(f, anchor)];
        terms.extend(negatives.iter().map(|x| cosine_with_grad(f, x)));
        let logits: Vec<f64> = terms.iter().map(|(c, _)| c / temperature).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        total += w * (max + z.ln() - logits[0]);
        for (k, (l, (_, dc))) in logits.iter().zip(&terms).enumerate() {
            let soft = (l - max).exp() / z;
            let dl = if k == 0 { soft - 1.0 } else { soft };
            for (g, d) in grad[u as usize * dim..(u as usize + 1) * dim].iter_mut().zip(dc) {
                *g += w * dl * d / temperature;
            }
        }
    }
    (total, model.pullback(&grad))
}

fn descend(model: &mut RecModel, grad: &[f64], lr: f64, mask: &[bool]) {
    for ((p, g), m) in model.params_mut().values_mut().iter_mut().zip(grad).zip(mask) {
        if *m {
            *p -= lr * g;
        }
    }
}

/// One Fanchuan update.
///
/// Phase 1 takes `fanchuan_kl_steps` gradient steps on the KL term for the
/// forget users. Phase 2 runs `fanchuan_rounds` rounds, each made of
/// `fanchuan_draws` contrastive steps against retain-user batches from
/// `pool` and a repair fine-tune on `retain`.
pub fn fanchuan_step(
    model: &RecModel,
    forget: &SampleSet,
    pool: &mut ShuffledPool<u32>,
    retain: &SampleSet,
    cfg: &AlgoConfig,
    ctx: &StepContext,
) -> Result<StepOutcome> {
    let before = model.params();
    if !model.kind().is_gradient_based() {
        return Ok(StepOutcome::unchanged(before, StepStatus::NotApplicable));
    }
    let users = distinct_users(forget);
    if users.is_empty() {
        return Ok(StepOutcome::unchanged(before, StepStatus::Ok));
    }
    let mask = cfg.param_scope.mask(Algorithm::Fanchuan, before);
    let dim = model.hyper().embedding_dim;
    let mut work = model.clone();

    for _ in 0..cfg.fanchuan_kl_steps {
        let (_, g) = kl_to_uniform(&work, &users)?;
        descend(&mut work, &g, cfg.learning_rate, &mask);
    }

    let anchors: Vec<Vec<f64>> = {
        let emb = work.final_embeddings();
        users.iter().map(|&u| row(&emb, u as usize, dim).to_vec()).collect()
    };
    let scale = mask_scale(&mask);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[ctx.seed, name_hash("fanchuan")]));
    for _ in 0..cfg.fanchuan_rounds {
        for _ in 0..cfg.fanchuan_draws {
            let Some(batch) = pool.draw() else { break };
            let negatives: Vec<Vec<f64>> = {
                let emb = work.final_embeddings();
                batch.iter().map(|&u| row(&emb, u as usize, dim).to_vec()).collect()
            };
            let (_, g) = contrastive(&work, &users, &anchors, &negatives, cfg.fanchuan_temperature);
            descend(&mut work, &g, cfg.learning_rate, &mask);
        }
        let tune = Tune {
            lr: cfg.learning_rate,
            epochs: cfg.repair_epochs,
            batch_size: cfg.repair_batch_size,
            clip: cfg.max_norm,
            scale: Some(&scale),
            linear: None,
        };
        if fine_tune(&mut work, retain, &tune, &mut rng)?.is_none() {
            return Ok(StepOutcome::diverged(before, None));
        }
    }
    Ok(StepOutcome::finish(before, work.params().clone(), Diagnostics::default()))
}
