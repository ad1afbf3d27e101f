//! Per-run comparison of the unlearned model against the retrained one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::{deployable, rel_eff_from, sensitive_at_k, speedup, utility, RankingMetrics};
use crate::error::{Error, Result};
use crate::data::Dataset;
use crate::models::{ModelKind, RecModel};
use crate::scenarios::ScenarioKind;
use crate::unlearn::{combined_status, Algorithm, StepRecord, StepStatus, Trajectory};

/// Default cutoffs.
pub const DEFAULT_KS: [usize; 2] = [10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    /// Utility of the unlearned model; absent when unlearning did not
    /// produce a usable model.
    pub unlearned: Option<RankingMetrics>,
    pub retrained: RankingMetrics,
    pub sensitive_unlearned: Option<f64>,
    pub sensitive_retrained: Option<f64>,
    pub rel_items: Option<f64>,
    pub rel_eff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub unlearn_total_s: f64,
    pub unlearn_avg_per_request_s: f64,
    pub retrain_s: f64,
    pub speedup: Option<f64>,
    pub deployable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: ModelKind,
    pub algorithm: Algorithm,
    pub scenario: Option<ScenarioKind>,
    pub seed: u64,
    pub status: StepStatus,
    pub requests: usize,
    pub forgotten_interactions: usize,
    pub per_k: Vec<KMetrics>,
    pub timing: Timing,
}

impl MetricsReport {
    pub fn at(&self, k: usize) -> Option<&KMetrics> {
        self.per_k.iter().find(|m| m.k == k)
    }
}

/// Users and items the Sensitive@k family is measured on.
#[derive(Debug, Clone, Copy)]
pub struct SensitiveTarget<'a> {
    pub users: &'a BTreeSet<u32>,
    pub items: &'a BTreeSet<u32>,
}

/// The unlearning side of a report: the per-step log, the final model and
/// the dataset with every processed batch removed.
#[derive(Debug, Clone, Copy)]
pub struct UnlearnedRun<'a> {
    pub algorithm: Algorithm,
    pub records: &'a [StepRecord],
    pub model: &'a RecModel,
    pub dataset: &'a Dataset,
}

impl<'a> UnlearnedRun<'a> {
    pub fn new(trajectory: &'a Trajectory, records: &'a [StepRecord]) -> Self {
        Self {
            algorithm: trajectory.algorithm,
            records,
            model: &trajectory.final_model,
            dataset: &trajectory.final_dataset,
        }
    }
}

pub struct ReportInput<'a> {
    pub run: UnlearnedRun<'a>,
    /// Trained from scratch on the trajectory's final dataset.
    pub retrained: &'a RecModel,
    /// Test lists used for utility (the scrubbed lists under the sensitive
    /// scenario).
    pub test: &'a [Vec<u32>],
    pub sensitive: Option<SensitiveTarget<'a>>,
    pub scenario: Option<ScenarioKind>,
    pub retrain_seconds: f64,
    pub ks: &'a [usize],
    pub seed: u64,
}

pub fn build_report(input: &ReportInput<'_>) -> Result<MetricsReport> {
    let run = input.run;
    let dataset = run.dataset;
    let unlearned = run.model;
    let retrained = input.retrained;
    if retrained.user_count() != unlearned.user_count() || retrained.item_count() != unlearned.item_count() {
        return Err(Error::contract("retrained and unlearned models have different vocabularies"));
    }
    let status = combined_status(run.records.iter().map(|r| r.status));
    let usable = status == StepStatus::Ok;

    let ret_util = utility(retrained, dataset, input.test, input.ks)?;
    let unl_util = if usable {
        Some(utility(unlearned, dataset, input.test, input.ks)?)
    } else {
        None
    };
    let sensitive = input.sensitive.filter(|s| !s.users.is_empty());

    let mut per_k = Vec::with_capacity(input.ks.len());
    for (j, &k) in input.ks.iter().enumerate() {
        let retrained_m = ret_util[j].metrics;
        let unlearned_m = unl_util.as_ref().map(|u| u[j].metrics);
        let sens_r = sensitive
            .map(|s| sensitive_at_k(retrained, s.users, s.items, k, dataset))
            .transpose()?;
        let sens_u = match (sensitive, usable) {
            (Some(s), true) => Some(sensitive_at_k(unlearned, s.users, s.items, k, dataset)?),
            _ => None,
        };
        per_k.push(KMetrics {
            k,
            unlearned: unlearned_m,
            retrained: retrained_m,
            sensitive_unlearned: sens_u,
            sensitive_retrained: sens_r,
            rel_items: sens_r.zip(sens_u).map(|(r, u)| r - u),
            rel_eff: unlearned_m.and_then(|u| rel_eff_from(u.ndcg, retrained_m.ndcg).ok()),
        });
    }

    let total: f64 = run.records.iter().map(|r| r.wall_clock_seconds).sum();
    let requests = run.records.len();
    let speed = speedup(input.retrain_seconds, total).ok();
    let headline = input.ks.iter().copied().max().and_then(|k| per_k.iter().find(|m| m.k == k)).and_then(|m| m.rel_eff);
    Ok(MetricsReport {
        model: unlearned.kind(),
        algorithm: run.algorithm,
        scenario: input.scenario,
        seed: input.seed,
        status,
        requests,
        forgotten_interactions: run.records.last().map_or(0, |r| r.cumulative_forget_interactions),
        per_k,
        timing: Timing {
            unlearn_total_s: total,
            unlearn_avg_per_request_s: if requests > 0 { total / requests as f64 } else { 0.0 },
            retrain_s: input.retrain_seconds,
            speedup: speed,
            deployable: speed.zip(headline).map(|(s, r)| deployable(s, r)),
        },
    })
}
