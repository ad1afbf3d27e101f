//! Weighted BPR loss, gradient and Hessian-vector product over an embedding
//! table laid out users first, then items.
//!
//! Per sample with margin `x = p·(q_i − q_j)` (or `p·q_i` without a negative)
//! the loss is `softplus(−x)`; the L2 term is applied separately to the raw
//! parameters so LightGCN can regularise layer-0 embeddings only.

use super::samples::{Sample, SampleSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub users: usize,
    pub items: usize,
    pub dim: usize,
}

impl Geometry {
    fn user(&self, u: u32) -> std::ops::Range<usize> {
        let s = u as usize * self.dim;
        s..s + self.dim
    }

    fn item(&self, i: u32) -> std::ops::Range<usize> {
        let s = (self.users + i as usize) * self.dim;
        s..s + self.dim
    }

    pub fn check(&self, samples: &SampleSet, coeffs: &[f64]) -> Result<()> {
        if samples.len() != coeffs.len() {
            return Err(Error::contract(format!(
                "{} samples but {} coefficients",
                samples.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::contract("sample coefficients must be finite"));
        }
        for s in samples.iter() {
            let bad_item = |i: u32| i as usize >= self.items;
            if s.user as usize >= self.users || bad_item(s.positive) || s.negative.is_some_and(bad_item) {
                return Err(Error::contract(format!("sample {s:?} is out of the model vocabulary")));
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−ln σ(x)` without overflow.
pub(crate) fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn margin(emb: &[f64], g: Geometry, s: &Sample) -> f64 {
    let p = &emb[g.user(s.user)];
    let pos = dot(p, &emb[g.item(s.positive)]);
    match s.negative {
        Some(j) => pos - dot(p, &emb[g.item(j)]),
        None => pos,
    }
}

/// Accumulates the data term into `grad` and returns its weighted loss.
pub(crate) fn loss_grad(emb: &[f64], g: Geometry, samples: &SampleSet, coeffs: &[f64], grad: &mut [f64]) -> f64 {
    let mut loss = 0.0;
    for (s, &c) in samples.iter().zip(coeffs) {
        if c == 0.0 {
            continue;
        }
        let x = margin(emb, g, s);
        loss += c * neg_log_sigmoid(x);
        let d1 = c * (sigmoid(x) - 1.0);
        let (pu, qi) = (g.user(s.user), g.item(s.positive));
        for k in 0..g.dim {
            let p = emb[pu.start + k];
            let diff = emb[qi.start + k] - s.negative.map_or(0.0, |j| emb[g.item(j).start + k]);
            grad[pu.start + k] += d1 * diff;
            grad[qi.start + k] += d1 * p;
            if let Some(j) = s.negative {
                grad[g.item(j).start + k] -= d1 * p;
            }
        }
    }
    loss
}

/// Accumulates the data-term Hessian applied to `v` into `out`.
pub(crate) fn hvp(emb: &[f64], g: Geometry, samples: &SampleSet, coeffs: &[f64], v: &[f64], out: &mut [f64]) {
    for (s, &c) in samples.iter().zip(coeffs) {
        if c == 0.0 {
            continue;
        }
        let x = margin(emb, g, s);
        let sig = sigmoid(x);
        let d1 = c * (sig - 1.0);
        let d2 = c * sig * (1.0 - sig);
        let (pu, qi) = (g.user(s.user), g.item(s.positive));
        let qj = s.negative.map(|j| g.item(j));

        // directional derivative of the margin along v
        let mut a = 0.0;
        for k in 0..g.dim {
            let p = emb[pu.start + k];
            let mut diff = emb[qi.start + k];
            a += p * v[qi.start + k];
            if let Some(qj) = &qj {
                diff -= emb[qj.start + k];
                a -= p * v[qj.start + k];
            }
            a += diff * v[pu.start + k];
        }
        for k in 0..g.dim {
            let p = emb[pu.start + k];
            let vp = v[pu.start + k];
            let mut diff = emb[qi.start + k];
            let mut vdiff = v[qi.start + k];
            if let Some(qj) = &qj {
                diff -= emb[qj.start + k];
                vdiff -= v[qj.start + k];
            }
            out[pu.start + k] += d2 * a * diff + d1 * vdiff;
            out[qi.start + k] += d2 * a * p + d1 * vp;
            if let Some(qj) = &qj {
                out[qj.start + k] -= d2 * a * p + d1 * vp;
            }
        }
    }
}

/// `(l2/2)(‖p_u‖² + ‖q_i‖² + ‖q_j‖²)` per sample, weighted.
pub(crate) fn reg_loss_grad(raw: &[f64], g: Geometry, samples: &SampleSet, coeffs: &[f64], l2: f64, grad: &mut [f64]) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let mut loss = 0.0;
    for (s, &c) in samples.iter().zip(coeffs) {
        if c == 0.0 {
            continue;
        }
        for r in rows(g, s) {
            let w = &raw[r.clone()];
            loss += 0.5 * c * l2 * dot(w, w);
            for (gk, wk) in grad[r].iter_mut().zip(w) {
                *gk += c * l2 * wk;
            }
        }
    }
    loss
}

pub(crate) fn reg_hvp(g: Geometry, samples: &SampleSet, coeffs: &[f64], l2: f64, v: &[f64], out: &mut [f64]) {
    if l2 == 0.0 {
        return;
    }
    for (s, &c) in samples.iter().zip(coeffs) {
        for r in rows(g, s) {
            for (o, vk) in out[r.clone()].iter_mut().zip(&v[r]) {
                *o += c * l2 * vk;
            }
        }
    }
}

fn rows(g: Geometry, s: &Sample) -> impl Iterator<Item = std::ops::Range<usize>> {
    [Some(g.user(s.user)), Some(g.item(s.positive)), s.negative.map(|j| g.item(j))]
        .into_iter()
        .flatten()
}
