//! Kookmin: reset the parameters whose forget and retain gradients agree
//! most, then fine-tune on retained data at a reduced learning rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::common::{fine_tune, uniform, StepContext, Tune};
use super::config::{AlgoConfig, Algorithm};
use super::outcome::{Diagnostics, StepOutcome, StepStatus};
use crate::error::{Error, Result};
use crate::math::{derive_seed, name_hash, ParamVector};
use crate::models::{Objective, SampleSet};

/// Learning-rate multiplier for coordinates that were not reset.
const KEPT_LR_FACTOR: f64 = 0.1;

/// Number of coordinates reset in a segment of `len` coordinates.
pub fn kookmin_reset_count(rate: f64, len: usize) -> usize {
    if len == 0 {
        return 0;
    }
    ((rate * len as f64 - 1e-9).ceil().max(0.0) as usize).min(len)
}

/// Picks, in every in-scope segment, the `kookmin_reset_count` coordinates
/// with the largest `scores`. Ties go to the lower index. Returns flat
/// coordinate indices in ascending order.
pub fn kookmin_select(params: &ParamVector, scores: &[f64], rate: f64, in_scope: impl Fn(&str) -> bool) -> Result<Vec<usize>> {
    if scores.len() != params.len() {
        return Err(Error::contract("one score per parameter is required"));
    }
    let mut picked = Vec::new();
    for seg in params.segments() {
        if !in_scope(&seg.name) {
            continue;
        }
        let range = seg.offset..seg.offset + seg.len;
        let mut idx: Vec<usize> = range.collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        idx.truncate(kookmin_reset_count(rate, seg.len));
        picked.extend(idx);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// One Kookmin update.
///
/// `retain` scores the parameters; `tune_samples` is the fine-tuning
/// workload; `init_snapshot` holds the values the model started training
/// from.
pub fn kookmin_step<M: Objective + Clone>(
    model: &M,
    forget: &SampleSet,
    retain: &SampleSet,
    tune_samples: &SampleSet,
    init_snapshot: &ParamVector,
    cfg: &AlgoConfig,
    ctx: &StepContext,
) -> Result<StepOutcome> {
    let before = model.params();
    if init_snapshot.layout() != before.layout() {
        return Err(Error::contract("initial snapshot layout does not match the model"));
    }
    if forget.is_empty() {
        return Ok(StepOutcome::unchanged(before, StepStatus::Ok));
    }
    let (_, g_f) = model.loss_grad(forget, &uniform(forget.len(), 1.0 / forget.len() as f64))?;
    let (_, g_r) = if retain.is_empty() {
        (0.0, vec![0.0; before.len()])
    } else {
        model.loss_grad(retain, &uniform(retain.len(), 1.0 / retain.len() as f64))?
    };
    let scores: Vec<f64> = g_f.iter().zip(&g_r).map(|(a, b)| a * b).collect();
    let scope = cfg.param_scope.resolve(Algorithm::Kookmin, before);
    let reset = kookmin_select(before, &scores, cfg.kookmin_init_rate, |n| scope.includes(n))?;

    let mut work = model.clone();
    let mut scale: Vec<f64> = before
        .mask_where(|n| scope.includes(n))
        .into_iter()
        .map(|m| if m { KEPT_LR_FACTOR } else { 0.0 })
        .collect();
    {
        let values = work.params_mut().values_mut();
        for &k in &reset {
            values[k] = init_snapshot.values()[k];
            scale[k] = 1.0;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[ctx.seed, name_hash("kookmin")]));
    let tune = Tune {
        lr: cfg.learning_rate * cfg.kookmin_lr_scale,
        epochs: cfg.repair_epochs,
        batch_size: cfg.repair_batch_size,
        clip: None,
        scale: Some(&scale),
        linear: None,
    };
    if fine_tune(&mut work, tune_samples, &tune, &mut rng)?.is_none() {
        return Ok(StepOutcome::diverged(before, None));
    }
    Ok(StepOutcome::finish(
        before,
        work.params().clone(),
        Diagnostics {
            resets: Some(reset.len()),
            ..Default::default()
        },
    ))
}

/// Fine-tuning workload for a forget batch of `forget_len` interactions.
pub(crate) fn kookmin_workload(cfg: &AlgoConfig, forget_len: usize) -> usize {
    forget_len
        .saturating_mul(cfg.kookmin_samples_per_forget)
        .clamp(1, cfg.repair_sample_budget.max(1))
}
