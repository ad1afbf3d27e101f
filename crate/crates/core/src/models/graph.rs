//! User–item bipartite graph with LightGCN's symmetric normalisation.
//!
//! Nodes are numbered users first (`0..U`) then items (`U..U+I`), matching the
//! row order of the concatenated embedding table.

use std::collections::VecDeque;

use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationGraph {
    user_count: usize,
    item_count: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
}

impl PropagationGraph {
    /// Builds the graph from the current train interactions. Repeated
    /// `(user, item)` pairs collapse into one edge.
    pub fn from_dataset(ds: &Dataset) -> Self {
        let edges: Vec<(u32, u32)> = (0..ds.user_count() as u32)
            .flat_map(|u| ds.user_items(u).iter().map(move |&i| (u, i)))
            .collect();
        Self::from_edges(ds.user_count(), ds.item_count(), &edges)
    }

    /// `edges` are `(user, item)` pairs and must be free of duplicates.
    pub fn from_edges(user_count: usize, item_count: usize, edges: &[(u32, u32)]) -> Self {
        let n = user_count + item_count;
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(u, i) in edges {
            let item_node = (user_count + i as usize) as u32;
            adj[u as usize].push(item_node);
            adj[item_node as usize].push(u);
        }
        let degree: Vec<f64> = adj.iter().map(|a| a.len() as f64).collect();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(edges.len() * 2);
        let mut weights = Vec::with_capacity(edges.len() * 2);
        indptr.push(0);
        for (node, nbrs) in adj.iter_mut().enumerate() {
            nbrs.sort_unstable();
            for &m in nbrs.iter() {
                indices.push(m);
                weights.push(1.0 / (degree[node] * degree[m as usize]).sqrt());
            }
            indptr.push(indices.len());
        }
        Self {
            user_count,
            item_count,
            indptr,
            indices,
            weights,
        }
    }

    pub fn node_count(&self) -> usize {
        self.user_count + self.item_count
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_node(&self, item: u32) -> usize {
        self.user_count + item as usize
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.indices[self.indptr[node]..self.indptr[node + 1]]
    }

    /// One application of the normalised adjacency to an `N × dim` table.
    pub fn apply(&self, x: &[f64], dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for node in 0..self.node_count() {
            let row = &mut out[node * dim..(node + 1) * dim];
            for k in self.indptr[node]..self.indptr[node + 1] {
                let m = self.indices[k] as usize;
                let w = self.weights[k];
                for (o, v) in row.iter_mut().zip(&x[m * dim..(m + 1) * dim]) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// Embedding tables for layers `0..=layers`.
    pub fn layer_tables(&self, x: &[f64], dim: usize, layers: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(layers + 1);
        out.push(x.to_vec());
        for l in 0..layers {
            let next = self.apply(&out[l], dim);
            out.push(next);
        }
        out
    }

    /// Mean over layers `0..=layers`. The operator is symmetric, so the same
    /// call back-propagates gradients.
    pub fn propagate(&self, x: &[f64], dim: usize, layers: usize) -> Vec<f64> {
        if layers == 0 {
            return x.to_vec();
        }
        let mut acc = x.to_vec();
        let mut cur = x.to_vec();
        for _ in 0..layers {
            cur = self.apply(&cur, dim);
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += c;
            }
        }
        let scale = 1.0 / (layers + 1) as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        acc
    }

    /// Hop distance of every node from the nearest source, up to `max_hops`.
    pub fn hop_distances(&self, sources: &[usize], max_hops: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(node) = queue.pop_front() {
            let d = dist[node].expect("queued nodes have a distance");
            if d == max_hops {
                continue;
            }
            for &m in self.neighbors(node) {
                let m = m as usize;
                if dist[m].is_none() {
                    dist[m] = Some(d + 1);
                    queue.push_back(m);
                }
            }
        }
        dist
    }
}
