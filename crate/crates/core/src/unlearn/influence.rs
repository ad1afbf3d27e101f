//! Second-order influence updates: SCIF, CEU and IDEA.
//!
//! All three are generic over [`Objective`] so they run on the recommenders
//! and on small quadratic problems alike.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::common::{apply_delta, concat, fine_tune, mask_scale, solve_masked, uniform, Solver, StepContext, Tune};
use super::config::{AlgoConfig, Algorithm};
use super::outcome::{Diagnostics, SolverSummary, StepOutcome, StepStatus};
use crate::error::{Error, Result};
use crate::math::{derive_seed, gaussian_perturb, name_hash, norm, NoiseSeed, SolveStatus};
use crate::models::{Objective, SampleSet};

/// SCIF: one Newton step on
/// `(1/n)(−Σℓ(z) + Σℓ(z̄) + Σℓ(zᵢ))` with `n = |forget| + |modified| + |retain|`.
///
/// The Hessian is taken of the same sum with all weights positive, which
/// keeps it positive definite near a trained optimum. Only the coordinates
/// in the resolved parameter scope move.
pub fn scif_step<M: Objective>(
    model: &M,
    forget: &SampleSet,
    modified: &SampleSet,
    retain: &SampleSet,
    cfg: &AlgoConfig,
    ctx: &StepContext,
) -> Result<StepOutcome> {
    let before = model.params();
    if forget.is_empty() {
        return Ok(StepOutcome::unchanged(before, StepStatus::Ok));
    }
    let all = concat(&[forget, modified, retain]);
    let n = all.len() as f64;
    let mut signed = uniform(forget.len(), -1.0 / n);
    signed.extend(uniform(modified.len() + retain.len(), 1.0 / n));
    let absolute = uniform(all.len(), 1.0 / n);

    let (_, grad) = model.loss_grad(&all, &signed)?;
    let mask = cfg.param_scope.mask(Algorithm::Scif, before);
    let report = solve_masked(
        |v| model.hvp(&all, &absolute, v, cfg.damping),
        &grad,
        &mask,
        Solver::Cg {
            tol: cfg.cg_tol,
            max_iters: cfg.cg_max_iters,
        },
        ctx,
    )?;
    if report.status == SolveStatus::Diverged {
        return Ok(StepOutcome::diverged(before, Some(&report)));
    }
    let delta: Vec<f64> = report.solution.iter().map(|x| -x).collect();
    let (after, clipped) = apply_delta(before, delta, cfg.max_norm)?;
    Ok(StepOutcome::finish(
        before,
        after,
        Diagnostics {
            clipped,
            solver: Some(SolverSummary::from(&report)),
            ..Default::default()
        },
    ))
}

/// CEU: a noise-stabilised fine-tune on the retain sample, then the edge
/// removal update `x = (H̄_R + λI)⁻¹ (Σ_F ∇ℓ) / n_retained`, then
/// certification noise.
///
/// `H̄_R` is the mean Hessian over `retain`, which stands in for the mean
/// over all `n_retained` remaining training interactions.
pub fn ceu_step<M: Objective + Clone>(
    model: &M,
    forget: &SampleSet,
    retain: &SampleSet,
    n_retained: usize,
    cfg: &AlgoConfig,
    ctx: &StepContext,
) -> Result<StepOutcome> {
    let before = model.params();
    if forget.is_empty() {
        return Ok(StepOutcome::unchanged(before, StepStatus::Ok));
    }
    if retain.is_empty() || n_retained == 0 {
        return Err(Error::contract("ceu needs a non-empty retain sample"));
    }
    let mask = cfg.param_scope.mask(Algorithm::Ceu, before);
    let mut work = model.clone();

    // (1) fine-tune with the linear term bᵀθ, b ~ N(0, σ²) on the scope
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[ctx.seed, name_hash("ceu")]));
    let b: Vec<f64> = if cfg.ceu_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.ceu_sigma).map_err(|e| Error::contract(e.to_string()))?;
        mask.iter().map(|&m| if m { normal.sample(&mut rng) } else { 0.0 }).collect()
    } else {
        vec![0.0; mask.len()]
    };
    let scale = mask_scale(&mask);
    let tune = Tune {
        lr: cfg.learning_rate,
        epochs: cfg.repair_epochs,
        batch_size: cfg.repair_batch_size,
        clip: cfg.max_norm,
        scale: Some(&scale),
        linear: Some(&b),
    };
    if fine_tune(&mut work, retain, &tune, &mut rng)?.is_none() {
        return Ok(StepOutcome::diverged(before, None));
    }

    // (2) damped influence update for the removed edges
    let n = n_retained as f64;
    let (_, grad) = work.loss_grad(forget, &uniform(forget.len(), 1.0 / n))?;
    let mean = uniform(retain.len(), 1.0 / retain.len() as f64);
    let report = solve_masked(
        |v| work.hvp(retain, &mean, v, cfg.ceu_lambda),
        &grad,
        &mask,
        Solver::Cg {
            tol: cfg.cg_tol,
            max_iters: cfg.cg_max_iters,
        },
        ctx,
    )?;
    if report.status == SolveStatus::Diverged {
        return Ok(StepOutcome::diverged(before, Some(&report)));
    }
    let (updated, clipped) = apply_delta(work.params(), report.solution.clone(), cfg.max_norm)?;

    // (4) certification noise on the updated segments
    let scope = cfg.param_scope.resolve(Algorithm::Ceu, before);
    let after = gaussian_perturb(
        &updated,
        cfg.ceu_sigma,
        |name| scope.includes(name),
        NoiseSeed::new(ctx.seed, name_hash("ceu-noise")),
    )?;
    Ok(StepOutcome::finish(
        before,
        after,
        Diagnostics {
            clipped,
            solver: Some(SolverSummary::from(&report)),
            ..Default::default()
        },
    ))
}

/// Gaussian-mechanism noise scale `‖x‖·√(2 ln(1.25/δ))/ε` for an update of
/// norm `update_norm`. Zero when the update is zero or `ε = ∞`.
pub fn idea_required_sigma(update_norm: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if update_norm == 0.0 || epsilon == f64::INFINITY {
        return Ok(0.0);
    }
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!(
            "(epsilon, delta) = ({epsilon}, {delta}) cannot certify a non-zero update"
        )));
    }
    Ok(update_norm * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// IDEA: `x = (H_pruned + λI)⁻¹ (∇L_original − ∇L_pruned)` with summed
/// losses, `θ += x`, then Gaussian noise calibrated to `‖x‖`.
///
/// `original` and `pruned` share parameters and differ only in structure
/// (the LightGCN graph). The original loss covers `forget` and `retain`, the
/// pruned loss `retain` only. Retain terms carry `retain_weight`, so a
/// sample of the retained data can stand in for all of it; with the full
/// retained set and weight one the update is exact.
pub fn idea_step<M: Objective>(
    original: &M,
    pruned: &M,
    forget: &SampleSet,
    retain: &SampleSet,
    retain_weight: f64,
    cfg: &AlgoConfig,
    ctx: &StepContext,
) -> Result<StepOutcome> {
    let before = original.params();
    if pruned.params() != before {
        return Err(Error::contract("idea needs the original and pruned objectives to share parameters"));
    }
    if !(retain_weight >= 0.0 && retain_weight.is_finite()) {
        return Err(Error::contract("retain weight must be finite and non-negative"));
    }
    let mask = cfg.param_scope.mask(Algorithm::Idea, before);
    let weights = uniform(retain.len(), retain_weight);
    let (_, mut v) = original.loss_grad(forget, &uniform(forget.len(), 1.0))?;
    let (_, r_orig) = original.loss_grad(retain, &weights)?;
    let (_, r_pruned) = pruned.loss_grad(retain, &weights)?;
    for ((x, a), b) in v.iter_mut().zip(&r_orig).zip(&r_pruned) {
        *x += a - b;
    }

    let (delta, solver) = if v.iter().all(|x| *x == 0.0) {
        (v, None)
    } else {
        let report = solve_masked(
            |w| pruned.hvp(retain, &weights, w, cfg.idea_damping),
            &v,
            &mask,
            Solver::Cg {
                tol: cfg.cg_tol,
                max_iters: cfg.cg_max_iters,
            },
            ctx,
        )?;
        if report.status == SolveStatus::Diverged {
            return Ok(StepOutcome::diverged(before, Some(&report)));
        }
        (report.solution.clone(), Some(SolverSummary::from(&report)))
    };
    let (updated, clipped) = apply_delta(before, delta, cfg.max_norm)?;
    let applied: Vec<f64> = updated.values().iter().zip(before.values()).map(|(a, b)| a - b).collect();
    let sigma = cfg.idea_sigma.max(idea_required_sigma(norm(&applied), cfg.epsilon, cfg.delta)?);
    let scope = cfg.param_scope.resolve(Algorithm::Idea, before);
    let after = gaussian_perturb(
        &updated,
        sigma,
        |name| scope.includes(name),
        NoiseSeed::new(ctx.seed, name_hash("idea-noise")),
    )?;
    Ok(StepOutcome::finish(
        before,
        after,
        Diagnostics {
            clipped,
            solver,
            ..Default::default()
        },
    ))
}
