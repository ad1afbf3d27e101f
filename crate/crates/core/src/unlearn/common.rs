//! Pieces shared by the step functions: masked inverse-HVP solves with
//! optional fault injection, clipped parameter updates and fine-tuning.

use std::cell::{Cell, RefCell};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{cg_solve, clip_in_place, neumann_inverse_hvp, FnOracle, ParamVector, SolveReport};
use crate::models::{Adam, Objective, Sample, SampleSet};

/// Per-step randomness and test hooks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepContext {
    /// Seed for every random draw the step makes.
    pub seed: u64,
    /// Replace the result of this (1-based) HVP call inside the step's
    /// solver with NaN.
    pub nan_at_hvp_call: Option<usize>,
}

impl StepContext {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            nan_at_hvp_call: None,
        }
    }
}

pub(crate) enum Solver {
    Cg { tol: f64, max_iters: usize },
    /// `damping` is added by the series, so the HVP closure must exclude it.
    Neumann { scale: f64, damping: f64, iters: usize },
}

/// Solves `A·x = rhs` on the coordinates where `mask` is set, with `A`
/// supplied by `hvp`. Coordinates outside the mask stay at zero.
pub(crate) fn solve_masked(
    hvp: impl Fn(&[f64]) -> Result<Vec<f64>>,
    rhs: &[f64],
    mask: &[bool],
    solver: Solver,
    ctx: &StepContext,
) -> Result<SolveReport> {
    let calls = Cell::new(0usize);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let oracle = FnOracle::new(rhs.len(), |v: &[f64]| {
        calls.set(calls.get() + 1);
        if ctx.nan_at_hvp_call == Some(calls.get()) {
            return vec![f64::NAN; v.len()];
        }
        match hvp(v) {
            Ok(mut out) => {
                for (o, keep) in out.iter_mut().zip(mask) {
                    if !keep {
                        *o = 0.0;
                    }
                }
                out
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                vec![f64::NAN; v.len()]
            }
        }
    });
    let rhs = masked(rhs, mask);
    let report = match solver {
        Solver::Cg { tol, max_iters } => cg_solve(&oracle, &rhs, tol, max_iters)?,
        // iterates stay in the subspace because rhs and every oracle output do
        Solver::Neumann { scale, damping, iters } => neumann_inverse_hvp(&oracle, &rhs, scale, damping, iters)?,
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(report)
}

pub(crate) fn masked(v: &[f64], mask: &[bool]) -> Vec<f64> {
    v.iter().zip(mask).map(|(x, &m)| if m { *x } else { 0.0 }).collect()
}

/// Clips `delta` to `max_norm` and adds it to `params`. Returns the new
/// parameters and whether clipping happened.
pub(crate) fn apply_delta(params: &ParamVector, mut delta: Vec<f64>, max_norm: Option<f64>) -> Result<(ParamVector, bool)> {
    let finite = delta.iter().all(|x| x.is_finite());
    let clipped = match max_norm {
        Some(m) if finite => clip_in_place(&mut delta, m)?,
        _ => false,
    };
    let mut out = params.clone();
    out.values_mut().iter_mut().zip(&delta).for_each(|(p, d)| *p += d);
    Ok((out, clipped))
}

pub(crate) fn uniform(n: usize, c: f64) -> Vec<f64> {
    vec![c; n]
}

pub(crate) fn concat(parts: &[&SampleSet]) -> SampleSet {
    let mut out = SampleSet::default();
    for p in parts {
        out.extend(p);
    }
    out
}

/// Settings for a fine-tuning pass with a fresh Adam state.
pub(crate) struct Tune<'a> {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip: Option<f64>,
    /// Per-coordinate learning-rate multiplier; zero freezes.
    pub scale: Option<&'a [f64]>,
    /// Extra linear term `bᵀθ` added to the objective.
    pub linear: Option<&'a [f64]>,
}

/// Mini-batch fine-tuning on `samples`. Returns the mean loss per epoch, or
/// `None` once a non-finite gradient shows up (parameters are then left as
/// they were before that update).
pub(crate) fn fine_tune<M: Objective, R: Rng + ?Sized>(
    model: &mut M,
    samples: &SampleSet,
    tune: &Tune<'_>,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    if samples.is_empty() || tune.epochs == 0 {
        return Ok(Some(Vec::new()));
    }
    let mut opt = Adam::new(model.params().len(), tune.lr);
    let mut order: Vec<Sample> = samples.samples().to_vec();
    let mut losses = Vec::with_capacity(tune.epochs);
    for _ in 0..tune.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(tune.batch_size) {
            let batch = SampleSet::new(chunk.to_vec())?;
            let coeffs = uniform(batch.len(), 1.0 / batch.len() as f64);
            let (loss, mut grad) = model.loss_grad(&batch, &coeffs)?;
            if let Some(b) = tune.linear {
                grad.iter_mut().zip(b).for_each(|(g, bk)| *g += bk);
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Ok(None);
            }
            if let Some(m) = tune.clip {
                clip_in_place(&mut grad, m)?;
            }
            opt.step(model.params_mut().values_mut(), &grad, tune.scale);
            total += loss * batch.len() as f64;
        }
        losses.push(total / order.len() as f64);
    }
    Ok(Some(losses))
}

/// Mask as a 0/1 learning-rate multiplier.
pub(crate) fn mask_scale(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
}
