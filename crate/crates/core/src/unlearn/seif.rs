//! Seif: perturb the parameters with Gaussian noise, then repair by
//! fine-tuning on retained data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::common::{fine_tune, StepContext, Tune};
use super::config::{AlgoConfig, Algorithm};
use super::outcome::{Diagnostics, StepOutcome};
use crate::error::Result;
use crate::math::{derive_seed, gaussian_perturb, name_hash, NoiseSeed};
use crate::models::{Objective, SampleSet};

/// One Seif update. Returns the outcome together with the per-epoch repair
/// losses.
pub fn seif_step<M: Objective + Clone>(
    model: &M,
    retain: &SampleSet,
    cfg: &AlgoConfig,
    ctx: &StepContext,
) -> Result<(StepOutcome, Vec<f64>)> {
    let before = model.params();
    let scope = cfg.param_scope.resolve(Algorithm::Seif, before);
    let noisy = gaussian_perturb(
        before,
        cfg.seif_sigma,
        |name| scope.includes(name),
        NoiseSeed::new(ctx.seed, name_hash("seif")),
    )?;
    let mut work = model.clone();
    *work.params_mut() = noisy;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[ctx.seed, name_hash("seif-repair")]));
    let tune = Tune {
        lr: cfg.learning_rate,
        epochs: cfg.repair_epochs,
        batch_size: cfg.repair_batch_size,
        clip: cfg.max_norm,
        scale: None,
        linear: None,
    };
    let Some(losses) = fine_tune(&mut work, retain, &tune, &mut rng)? else {
        return Ok((StepOutcome::diverged(before, None), Vec::new()));
    };
    Ok((StepOutcome::finish(before, work.params().clone(), Diagnostics::default()), losses))
}
