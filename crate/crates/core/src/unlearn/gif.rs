//! Graph influence function: an influence update restricted to the
//! embeddings of nodes near the removed edges.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::common::{apply_delta, solve_masked, uniform, Solver, StepContext};
use super::config::{AlgoConfig, Algorithm, GraphPolicy};
use super::outcome::{Diagnostics, SolverSummary, StepOutcome, StepStatus};
use crate::data::{apply_forget, Dataset, ForgetBatch};
use crate::error::{Error, Result};
use crate::math::SolveStatus;
use crate::models::{ModelKind, Objective, PropagationGraph, RecModel, SampleSet};

/// Nodes whose embeddings GIF may update: every node closer than `d` hops
/// to an endpoint of a removed edge. With `d = 0` only the endpoints.
pub fn gif_nodes(graph: &PropagationGraph, edges: &[(u32, u32)], d: usize) -> BTreeSet<usize> {
    let sources: Vec<usize> = edges
        .iter()
        .flat_map(|&(u, i)| [u as usize, graph.item_node(i)])
        .collect();
    let reach = d.max(1) - 1;
    graph
        .hop_distances(&sources, reach)
        .into_iter()
        .enumerate()
        .filter_map(|(node, dist)| dist.map(|_| node))
        .collect()
}

/// Expands a node set to a coordinate mask over a node-major embedding table.
pub(crate) fn node_mask(nodes: &BTreeSet<usize>, node_count: usize, dim: usize) -> Vec<bool> {
    let mut mask = vec![false; node_count * dim];
    for &n in nodes {
        mask[n * dim..(n + 1) * dim].fill(true);
    }
    mask
}

/// One GIF update for removing `batch` from `dataset` (the pre-removal view).
///
/// The right-hand side is `Σ_F ∇ℓ(z; G)/n_retained + mean_R(∇ℓ(z; G) − ∇ℓ(z; G'))`
/// where `G'` is the graph without the removed edges, and the system matrix
/// is the mean retain Hessian on `G'`. The solve is a Neumann series.
#[allow(clippy::too_many_arguments)]
pub fn gif_step(
    model: &RecModel,
    dataset: &Dataset,
    batch: &ForgetBatch,
    forget: &SampleSet,
    retain: &SampleSet,
    n_retained: usize,
    cfg: &AlgoConfig,
    ctx: &StepContext,
) -> Result<StepOutcome> {
    let before = model.params();
    let has_graph = model.kind() == ModelKind::Lightgcn;
    if !model.kind().is_gradient_based() || (!has_graph && cfg.graph_policy == GraphPolicy::Strict) {
        return Ok(StepOutcome::unchanged(before, StepStatus::NotApplicable));
    }
    if batch.is_empty() {
        return Ok(StepOutcome::unchanged(before, StepStatus::Ok));
    }
    if n_retained == 0 {
        return Err(Error::contract("gif needs a non-empty retained set"));
    }
    let graph = match model.graph() {
        Some(g) => g.clone(),
        None => Arc::new(PropagationGraph::from_dataset(dataset)),
    };
    let edges: Vec<(u32, u32)> = batch.interactions().iter().map(|x| (x.user, x.item)).collect();
    let nodes = gif_nodes(&graph, &edges, cfg.gif_hop_d);
    let scope = cfg.param_scope.mask(Algorithm::Gif, before);
    let mask: Vec<bool> = node_mask(&nodes, graph.node_count(), model.hyper().embedding_dim)
        .into_iter()
        .zip(&scope)
        .map(|(a, b)| a && *b)
        .collect();

    let pruned = if has_graph {
        model.with_graph(Arc::new(PropagationGraph::from_dataset(&apply_forget(dataset, batch)?)))
    } else {
        model.clone()
    };

    let (_, mut rhs) = model.loss_grad(forget, &uniform(forget.len(), 1.0 / n_retained as f64))?;
    let mean = uniform(retain.len(), 1.0 / retain.len().max(1) as f64);
    if has_graph && !retain.is_empty() {
        let (_, g_old) = model.loss_grad(retain, &mean)?;
        let (_, g_new) = pruned.loss_grad(retain, &mean)?;
        for ((r, a), b) in rhs.iter_mut().zip(&g_old).zip(&g_new) {
            *r += a - b;
        }
    }
    let report = solve_masked(
        |v| pruned.hvp(retain, &mean, v, 0.0),
        &rhs,
        &mask,
        Solver::Neumann {
            scale: cfg.gif_scale,
            damping: cfg.gif_damping,
            iters: cfg.gif_iters,
        },
        ctx,
    )?;
    if report.status == SolveStatus::Diverged {
        return Ok(StepOutcome::diverged(before, Some(&report)));
    }
    let (after, clipped) = apply_delta(before, report.solution.clone(), cfg.max_norm)?;
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
