use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::metrics::{auc, recall_at_positives};
use super::EvalReport;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::seed;

const TAG_POSITIVES: u64 = 1;
const TAG_NEGATIVES: u64 = 2;

/// Held-out positives and sampled non-edges of one link prediction run.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    pub reduced: Graph,
    pub positives: Vec<(NodeId, NodeId)>,
    pub negatives: Vec<(NodeId, NodeId)>,
}

/// Removes `round(frac * |E|)` edges, never one whose removal would leave an
/// endpoint without edges, and draws as many node pairs that are not edges
/// of the original graph.
pub fn split_edges(g: &Graph, frac: f64, seed: u64) -> Result<EdgeSplit> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::invalid(format!("edge fraction {frac} must lie in (0, 1)")));
    }
    let m = g.num_edges();
    let want = (frac * m as f64).round() as usize;
    if want == 0 {
        return Err(Error::invalid(format!("{m} edges are too few to hold out {frac}")));
    }
    let mut edges: Vec<_> = g.edges().collect();
    let mut rng = seed::stream(seed, &[TAG_POSITIVES]);
    edges.shuffle(&mut rng);
    let mut degree: Vec<usize> = (0..g.num_nodes()).map(|v| g.degree(v)).collect();
    let mut positives = Vec::with_capacity(want);
    for (u, v) in edges {
        if positives.len() == want {
            break;
        }
        if degree[u] > 1 && degree[v] > 1 {
            degree[u] -= 1;
            degree[v] -= 1;
            positives.push((u, v));
        }
    }
    if positives.len() < want {
        return Err(Error::invalid(format!(
            "only {} of {want} edges can be removed without isolating a node",
            positives.len()
        )));
    }

    let n = g.num_nodes() as u64;
    let non_edges = n * (n - 1) / 2 - m as u64;
    if non_edges < want as u64 {
        return Err(Error::invalid("graph is too dense for the requested negatives"));
    }
    let mut rng = seed::stream(seed, &[TAG_NEGATIVES]);
    let mut seen = HashSet::with_capacity(want);
    let mut negatives = Vec::with_capacity(want);
    while negatives.len() < want {
        let u = rng.random_range(0..g.num_nodes());
        let v = rng.random_range(0..g.num_nodes());
        let pair = (u.min(v), u.max(v));
        if u != v && !g.has_edge(u, v) && seen.insert(pair) {
            negatives.push(pair);
        }
    }
    Ok(EdgeSplit {
        reduced: g.without_edges(&positives)?,
        positives,
        negatives,
    })
}

/// Inner products of embedding rows.
pub fn pair_scores(embeddings: &Tensor, pairs: &[(NodeId, NodeId)]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(u, v)| {
            if u.max(v) >= embeddings.rows() {
                return Err(Error::invalid(format!("pair ({u}, {v}) has no embedding")));
            }
            Ok(embeddings.row(u).iter().zip(embeddings.row(v)).map(|(a, b)| a * b).sum())
        })
        .collect()
}

/// Holds out edges, embeds the reduced graph with `embed`, and ranks
/// held-out edges against sampled non-edges by inner product.
pub fn link_prediction_eval<F>(g: &Graph, embed: F, frac: f64, seed: u64) -> Result<EvalReport>
where
    F: FnOnce(&Graph) -> Result<Tensor>,
{
    let split = split_edges(g, frac, seed)?;
    let emb = embed(&split.reduced)?;
    if emb.rows() != g.num_nodes() {
        return Err(Error::invalid(format!(
            "embedding has {} rows for {} nodes",
            emb.rows(),
            g.num_nodes()
        )));
    }
    let pos = pair_scores(&emb, &split.positives)?;
    let neg = pair_scores(&emb, &split.negatives)?;
    let metrics = vec![("auc", auc(&pos, &neg)?), ("recall_at_frac", recall_at_positives(&pos, &neg)?)];
    EvalReport::from_runs("link_prediction", vec![seed], vec![metrics])
}
