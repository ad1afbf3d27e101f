//! Sequential unlearning: `θ⁽ⁱ⁺¹⁾ ← U(θ⁽ⁱ⁾, D_r⁽ⁱ⁾, D_f⁽ⁱ⁾)` over a list of
//! forget batches.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::common::StepContext;
use super::config::{AlgoConfig, Algorithm, DivergencePolicy};
use super::fanchuan::{fanchuan_step, ShuffledPool};
use super::gif::gif_step;
use super::influence::{ceu_step, idea_step, scif_step};
use super::kookmin::{kookmin_step, kookmin_workload};
use super::outcome::{StepOutcome, StepStatus};
use super::seif::seif_step;
use crate::data::{apply_forget, sample_retain, Dataset, ForgetBatch, RetainSample};
use crate::error::{Error, Result};
use crate::math::{derive_seed, name_hash, rng_from};
use crate::models::{draw_unseen, initial_params, ModelKind, PropagationGraph, RecModel, Sample, SampleSet};

/// Test hooks for the runner.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunHooks {
    /// `(request index, HVP call)`: poison that solver call with NaN.
    pub nan_at: Option<(usize, usize)>,
}

/// One line of the per-step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub algorithm: Algorithm,
    pub status: StepStatus,
    pub update_norm: f64,
    pub clipped: bool,
    pub wall_clock_seconds: f64,
    pub cumulative_forget_interactions: usize,
    pub rng_seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub index: usize,
    pub outcome: StepOutcome,
    pub cumulative_forget: usize,
    /// Training interactions left after this step.
    pub retained_after: usize,
    /// Users whose histories fed the retain path of this step.
    pub retain_users: Vec<u32>,
    pub rng_seed: u64,
}

impl TrajectoryStep {
    pub fn record(&self, algorithm: Algorithm) -> StepRecord {
        StepRecord {
            step: self.index,
            algorithm,
            status: self.outcome.status,
            update_norm: self.outcome.diagnostics.update_norm,
            clipped: self.outcome.diagnostics.clipped,
            wall_clock_seconds: self.outcome.wall_clock,
            cumulative_forget_interactions: self.cumulative_forget,
            rng_seed: self.rng_seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub steps: Vec<TrajectoryStep>,
    /// Digest of the parameters the run started from.
    pub initial_digest: String,
    pub final_model: RecModel,
    /// The dataset with every processed batch removed.
    pub final_dataset: Dataset,
    /// Owners of every processed batch.
    pub unlearned_users: BTreeSet<u32>,
    /// True when the halt policy stopped the run early.
    pub halted: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn records(&self) -> Vec<StepRecord> {
        self.steps.iter().map(|s| s.record(self.algorithm)).collect()
    }

    /// The per-step log, one JSON object per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn total_wall_clock(&self) -> f64 {
        self.steps.iter().map(|s| s.outcome.wall_clock).sum()
    }

    pub fn status(&self) -> StepStatus {
        combined_status(self.steps.iter().map(|s| s.outcome.status))
    }
}

/// Diverged if any step diverged, not applicable if every step was,
/// otherwise ok. An empty run is ok.
pub fn combined_status(statuses: impl IntoIterator<Item = StepStatus>) -> StepStatus {
    let statuses: Vec<StepStatus> = statuses.into_iter().collect();
    if statuses.contains(&StepStatus::Diverged) {
        StepStatus::Diverged
    } else if !statuses.is_empty() && statuses.iter().all(|s| *s == StepStatus::NotApplicable) {
        StepStatus::NotApplicable
    } else {
        StepStatus::Ok
    }
}

/// Parses a per-step log written by [`Trajectory::to_jsonl`].
pub fn parse_jsonl(text: &str) -> Result<Vec<StepRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Seed for request `index`.
pub fn step_seed(seed: u64, index: usize, algorithm: Algorithm) -> u64 {
    derive_seed(&[seed, index as u64, name_hash(algorithm.name())])
}

fn check_requests(dataset: &Dataset, requests: &[ForgetBatch]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (k, b) in requests.iter().enumerate() {
        for x in b.interactions() {
            if !seen.insert(x.id) {
                return Err(Error::contract(format!("interaction {} appears in more than one batch (batch {k})", x.id)));
            }
            if dataset.get(x.id) != Some(x) {
                return Err(Error::contract(format!("batch {k} holds interaction {} outside the train set", x.id)));
            }
        }
    }
    Ok(())
}

/// Runs `cfg.algorithm` over `requests` in order.
///
/// Every step draws its retain sample from users outside the cumulative
/// unlearned set (the current batch's owners included), runs the step,
/// and removes the batch from the dataset view. Count-based and random
/// models have no approximate update, so their steps are not applicable.
pub fn run_sequence(
    model: &RecModel,
    dataset: &Dataset,
    requests: &[ForgetBatch],
    cfg: &AlgoConfig,
    policy: DivergencePolicy,
    seed: u64,
    hooks: &RunHooks,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_requests(dataset, requests)?;
    let init_snapshot = if model.kind().is_gradient_based() && cfg.algorithm == Algorithm::Kookmin {
        Some(initial_params(model.hyper(), model.user_count(), model.item_count(), model.seed())?)
    } else {
        None
    };

    let mut current = model.clone();
    current.rebind_graph(dataset)?;
    let mut ds = dataset.clone();
    let mut unlearned = BTreeSet::new();
    let mut cumulative = 0;
    let mut frozen = false;
    let mut steps = Vec::with_capacity(requests.len());
    let mut halted = false;

    for (i, batch) in requests.iter().enumerate() {
        let rng_seed = step_seed(seed, i, cfg.algorithm);
        unlearned.extend(batch.owners().iter().copied());
        cumulative += batch.len();

        let (outcome, retain_users) = if frozen {
            (StepOutcome::unchanged(current.params(), StepStatus::Diverged), Vec::new())
        } else {
            let ctx = StepContext {
                seed: rng_seed,
                nan_at_hvp_call: hooks.nan_at.filter(|(k, _)| *k == i).map(|(_, c)| c),
            };
            let started = Instant::now();
            let (mut outcome, retain) = one_step(&current, &ds, batch, &unlearned, cfg, &ctx, init_snapshot.as_ref())?;
            outcome.wall_clock = started.elapsed().as_secs_f64();
            (outcome, retain.users)
        };

        ds = apply_forget(&ds, batch)?;
        if outcome.status == StepStatus::Ok {
            current.set_params(outcome.params_after.clone())?;
        }
        current.rebind_graph(&ds)?;
        let diverged = outcome.status == StepStatus::Diverged;
        steps.push(TrajectoryStep {
            index: i,
            outcome,
            cumulative_forget: cumulative,
            retained_after: ds.train().len(),
            retain_users,
            rng_seed,
        });
        if diverged {
            match policy {
                DivergencePolicy::HaltOnDiverge => {
                    halted = true;
                    break;
                }
                DivergencePolicy::Continue => frozen = true,
            }
        }
    }

    Ok(Trajectory {
        algorithm: cfg.algorithm,
        steps,
        initial_digest: model.params().digest(),
        final_model: current,
        final_dataset: ds,
        unlearned_users: unlearned,
        halted,
    })
}

/// Samples for SCIF's modified forget triples: the positive item swapped for
/// an item the user has not seen.
fn modified_samples<R: rand::Rng + ?Sized>(ds: &Dataset, forget: &SampleSet, rng: &mut R) -> Result<SampleSet> {
    let mut out = Vec::with_capacity(forget.len());
    for s in forget.iter() {
        let avoid = s.negative.unwrap_or(s.positive);
        if let Some(item) = draw_unseen(ds, s.user, avoid, rng) {
            out.push(Sample {
                user: s.user,
                positive: item,
                negative: s.negative,
            });
        }
    }
    SampleSet::new(out)
}

fn one_step(
    model: &RecModel,
    ds: &Dataset,
    batch: &ForgetBatch,
    unlearned: &BTreeSet<u32>,
    cfg: &AlgoConfig,
    ctx: &StepContext,
    init_snapshot: Option<&crate::math::ParamVector>,
) -> Result<(StepOutcome, RetainSample)> {
    let mut rng = rng_from(&[ctx.seed, name_hash("retain")]);
    let retain = sample_retain(ds, unlearned, Some(cfg.retain_cap()), cfg.retain_frac_cap, &mut rng)?;
    if !model.kind().is_gradient_based() {
        return Ok((StepOutcome::unchanged(model.params(), StepStatus::NotApplicable), retain));
    }
    let npp = model.hyper().negatives_per_positive;
    let mut rng = rng_from(&[ctx.seed, name_hash("samples")]);
    let forget = SampleSet::from_interactions(ds, batch.interactions(), npp, &mut rng);
    let retain_set = SampleSet::from_interactions(ds, &retain.interactions, npp, &mut rng);
    let n_retained = ds.train().len() - batch.len();

    let outcome = match cfg.algorithm {
        Algorithm::Scif => {
            let modified = modified_samples(ds, &forget, &mut rng)?;
            scif_step(model, &forget, &modified, &retain_set, cfg, ctx)?
        }
        Algorithm::Gif => gif_step(model, ds, batch, &forget, &retain_set, n_retained, cfg, ctx)?,
        Algorithm::Ceu => {
            if retain_set.is_empty() {
                StepOutcome::unchanged(model.params(), StepStatus::Ok)
            } else {
                ceu_step(model, &forget, &retain_set, n_retained, cfg, ctx)?
            }
        }
        Algorithm::Idea => {
            let pruned = if model.kind() == ModelKind::Lightgcn {
                model.with_graph(Arc::new(PropagationGraph::from_dataset(&apply_forget(ds, batch)?)))
            } else {
                model.clone()
            };
            let weight = if retain_set.is_empty() {
                0.0
            } else {
                n_retained as f64 / retain_set.len() as f64
            };
            idea_step(model, &pruned, &forget, &retain_set, weight, cfg, ctx)?
        }
        Algorithm::Kookmin => {
            let snapshot = init_snapshot.ok_or_else(|| Error::contract("kookmin needs the initial snapshot"))?;
            let take = kookmin_workload(cfg, batch.len()).min(retain_set.len());
            let tune = SampleSet::new(retain_set.samples()[..take].to_vec())?;
            kookmin_step(model, &forget, &retain_set, &tune, snapshot, cfg, ctx)?
        }
        Algorithm::Seif => seif_step(model, &retain_set, cfg, ctx)?.0,
        Algorithm::Fanchuan => {
            let mut pool = ShuffledPool::new(
                retain.users.clone(),
                cfg.fanchuan_batch_users,
                derive_seed(&[ctx.seed, name_hash("pool")]),
            )?;
            fanchuan_step(model, &forget, &mut pool, &retain_set, cfg, ctx)?
        }
    };
    Ok((outcome, retain))
}
