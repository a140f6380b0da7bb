//! Undirected graph storage in compressed adjacency form.
//!
//! Node ids are contiguous `usize` values; the original string identifiers are
//! kept alongside so outputs can be written back in the caller's vocabulary.

mod alias;
mod generate;
mod io;
mod stats;

use std::collections::HashMap;

pub use alias::{AliasSampler, AliasTable};
pub use generate::{generate_er, generate_planted_partition, generate_triad_circle, FeatureInit};
pub use io::{load_graph, write_edge_list, write_features, write_labels, LoadedGraph};
pub use stats::{degree_stats, expected_ego_edges, DegreeStats};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Largest graph for which missing features fall back to one-hot identity rows.
pub const MAX_IDENTITY_NODES: usize = 20_000;

/// Node-level input features.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// One-hot rows, `dim == num_nodes`. Never materialized as a full matrix.
    Identity(usize),
    Dense { dim: usize, data: Vec<f64> },
}

impl Features {
    pub fn dense(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "feature buffer of length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(Features::Dense { dim, data })
    }

    pub fn dim(&self) -> usize {
        match self {
            Features::Identity(n) => *n,
            Features::Dense { dim, .. } => *dim,
        }
    }

    fn rows(&self) -> usize {
        match self {
            Features::Identity(n) => *n,
            Features::Dense { dim, data } => data.len() / dim,
        }
    }

    /// Writes the feature row of `v` into `out` (length `dim`).
    pub fn copy_row(&self, v: NodeId, out: &mut [f64]) {
        match self {
            Features::Identity(_) => {
                out.fill(0.0);
                out[v] = 1.0;
            }
            Features::Dense { dim, data } => out.copy_from_slice(&data[v * dim..(v + 1) * dim]),
        }
    }
}

/// Class assignment for (a subset of) the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    classes: Vec<String>,
    assignment: Vec<Option<usize>>,
}

impl Labels {
    pub fn new(classes: Vec<String>, assignment: Vec<Option<usize>>) -> Result<Self> {
        if let Some(bad) = assignment.iter().flatten().find(|&&c| c >= classes.len()) {
            return Err(Error::invalid(format!("class index {bad} out of range")));
        }
        Ok(Labels {
            classes,
            assignment,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, v: NodeId) -> Option<usize> {
        self.assignment.get(v).copied().flatten()
    }

    /// `(node, class)` for every labeled node, in node order.
    pub fn labeled(&self) -> impl Iterator<Item = (NodeId, usize)> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(v, c)| c.map(|c| (v, c)))
    }
}

/// Immutable simple undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    ids: Vec<String>,
    index: HashMap<String, NodeId>,
    features: Option<Features>,
    labels: Option<Labels>,
}

impl Graph {
    /// Builds a graph over `num_nodes` nodes named `"0".."n-1"`.
    ///
    /// Edges are symmetrized and deduplicated; self-loops are dropped and
    /// counted in the returned value.
    pub fn from_edges(num_nodes: usize, edges: &[(NodeId, NodeId)]) -> Result<(Self, usize)> {
        let ids = (0..num_nodes).map(|i| i.to_string()).collect();
        Self::with_ids(ids, edges)
    }

    pub fn with_ids(ids: Vec<String>, edges: &[(NodeId, NodeId)]) -> Result<(Self, usize)> {
        let n = ids.len();
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate node id `{id}`")));
            }
        }
        let mut degree = vec![0usize; n];
        let mut self_loops = 0;
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut cursor = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; offsets[n]];
        for &(u, v) in edges {
            if u == v {
                continue;
            }
            neighbors[cursor[u]] = v;
            cursor[u] += 1;
            neighbors[cursor[v]] = u;
            cursor[v] += 1;
        }
        // sort + dedup each list, then compact
        let mut compact = Vec::with_capacity(neighbors.len());
        let mut new_offsets = vec![0usize; n + 1];
        for v in 0..n {
            let list = &mut neighbors[offsets[v]..offsets[v + 1]];
            list.sort_unstable();
            let start = compact.len();
            for &u in list.iter() {
                if compact.len() == start || *compact.last().unwrap() != u {
                    compact.push(u);
                }
            }
            new_offsets[v + 1] = compact.len();
        }
        compact.shrink_to_fit();
        Ok((
            Graph {
                offsets: new_offsets,
                neighbors: compact,
                ids,
                index,
                features: None,
                labels: None,
            },
            self_loops,
        ))
    }

    pub fn with_features(mut self, features: Features) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::invalid(format!(
                "features cover {} nodes, graph has {}",
                features.rows(),
                self.num_nodes()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.assignment.len() != self.num_nodes() {
            return Err(Error::invalid("label assignment length differs from node count"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Every undirected edge once, as `(u, v)` with `u < v`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn id(&self, v: NodeId) -> &str {
        &self.ids[v]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn node_index(&self, id: &str) -> Option<NodeId> {
        self.index.get(id).copied()
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// Copy of this graph with the given undirected edges removed.
    ///
    /// Ids, features and labels are preserved.
    pub fn without_edges(&self, removed: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut drop: Vec<(NodeId, NodeId)> =
            removed.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        drop.sort_unstable();
        let kept: Vec<_> = self
            .edges()
            .filter(|e| drop.binary_search(e).is_err())
            .collect();
        let (mut g, _) = Graph::with_ids(self.ids.clone(), &kept)?;
        g.features = self.features.clone();
        g.labels = self.labels.clone();
        Ok(g)
    }
}
