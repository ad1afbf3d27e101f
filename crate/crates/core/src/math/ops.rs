//! Norm clipping, finite checks and seeded Gaussian perturbation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::param::{norm, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteStatus {
    Ok,
    Nonfinite,
}

pub fn finite_check(v: &[f64]) -> FiniteStatus {
    if v.iter().all(|x| x.is_finite()) {
        FiniteStatus::Ok
    } else {
        FiniteStatus::Nonfinite
    }
}

fn clip_slack(max_norm: f64) -> f64 {
    1e-12_f64.max(max_norm * 4.0 * f64::EPSILON)
}

/// Rescales `update` in place so its ℓ₂ norm is at most `max_norm`.
/// Returns whether the vector was rescaled.
///
/// Vectors already within rounding distance of the bound are left alone,
/// which makes clipping exactly idempotent.
pub fn clip_in_place(update: &mut [f64], max_norm: f64) -> Result<bool> {
    if !(max_norm > 0.0) {
        return Err(Error::contract("max_norm must be positive"));
    }
    if finite_check(update) == FiniteStatus::Nonfinite {
        return Err(Error::NonFinite);
    }
    let n = norm(update);
    if !n.is_finite() {
        return Err(Error::NonFinite);
    }
    if n <= max_norm + clip_slack(max_norm) {
        return Ok(false);
    }
    let factor = max_norm / n;
    update.iter_mut().for_each(|v| *v *= factor);
    Ok(true)
}

pub fn clip_by_norm(update: &[f64], max_norm: f64) -> Result<Vec<f64>> {
    let mut out = update.to_vec();
    clip_in_place(&mut out, max_norm)?;
    Ok(out)
}

/// Mixes a list of words into one 64-bit seed (splitmix64 finaliser).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243F_6A88_85A3_08D3;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// FNV-1a over a string, used to fold names into seeds.
pub fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng_from(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

/// Root of the per-segment noise streams for one unlearning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSeed {
    pub experiment: u64,
    pub step: u64,
}

impl NoiseSeed {
    pub fn new(experiment: u64, step: u64) -> Self {
        Self { experiment, step }
    }

    /// Independent stream for `(experiment, step, segment)`.
    pub fn stream(&self, segment: &str) -> ChaCha8Rng {
        rng_from(&[self.experiment, self.step, name_hash(segment)])
    }
}

/// Adds i.i.d. `N(0, σ²)` noise to every segment accepted by `filter`.
///
/// Each segment draws from its own stream, so the result does not depend on
/// the order segments are visited in.
pub fn gaussian_perturb(
    params: &ParamVector,
    sigma: f64,
    filter: impl Fn(&str) -> bool,
    seed: NoiseSeed,
) -> Result<ParamVector> {
    if !(sigma >= 0.0) {
        return Err(Error::contract("sigma must be non-negative"));
    }
    let mut out = params.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::contract(e.to_string()))?;
    let names: Vec<String> = params.segments().iter().map(|s| s.name.clone()).collect();
    for name in names.iter().filter(|n| filter(n)) {
        let mut rng = seed.stream(name);
        if let Some(seg) = out.segment_mut(name) {
            for v in seg.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    Ok(out)
}
