//! Training material drawn from a corpus: walk triples for the pattern
//! proximity objective and skip-gram context pairs for the node objective.

use std::cmp::Ordering;

use rand::Rng;

use super::corpus::WalkCorpus;
use crate::error::{Error, Result};
use crate::graph::NodeId;

/// `(v, j, k, n)`: patterns `j`, `k` over-represented at `v` relative to the
/// graph mean and `n` under-represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkTriple {
    pub node: NodeId,
    pub anchor: u32,
    pub positive: u32,
    pub negative: u32,
}

/// Over- and under-represented pattern sets of `v`.
pub fn contrast_sets(corpus: &WalkCorpus, v: NodeId) -> (Vec<u32>, Vec<u32>) {
    let counts = corpus.node_counts(v);
    let mut over = Vec::new();
    let mut under = Vec::new();
    if counts.is_empty() {
        return (over, under);
    }
    let mut it = counts.iter().peekable();
    for id in 0..corpus.registry().len() as u32 {
        let c = match it.peek() {
            Some(&&(pid, c)) if pid == id => {
                it.next();
                c
            }
            _ => 0,
        };
        match corpus.compare_to_graph(id, c) {
            Ordering::Greater => over.push(id),
            Ordering::Less => under.push(id),
            Ordering::Equal => {}
        }
    }
    (over, under)
}

/// Draws up to `per_node` triples for every node whose over- and
/// under-represented sets are both non-empty.
pub fn sample_walk_triples<R: Rng>(
    corpus: &WalkCorpus,
    per_node: usize,
    rng: &mut R,
) -> Vec<WalkTriple> {
    TripleSampler::new(corpus).sample(per_node, rng)
}

/// Contrast sets of every eligible node, computed once per corpus.
#[derive(Debug, Clone)]
pub struct TripleSampler {
    sets: Vec<(NodeId, Vec<u32>, Vec<u32>)>,
}

impl TripleSampler {
    pub fn new(corpus: &WalkCorpus) -> Self {
        let sets = (0..corpus.num_nodes())
            .filter_map(|v| {
                let (over, under) = contrast_sets(corpus, v);
                (!over.is_empty() && !under.is_empty()).then_some((v, over, under))
            })
            .collect();
        TripleSampler { sets }
    }

    /// Nodes that can contribute triples.
    pub fn eligible_nodes(&self) -> usize {
        self.sets.len()
    }

    pub fn sample<R: Rng>(&self, per_node: usize, rng: &mut R) -> Vec<WalkTriple> {
        let mut out = Vec::with_capacity(self.sets.len() * per_node);
        for (v, over, under) in &self.sets {
            for _ in 0..per_node {
                out.push(WalkTriple {
                    node: *v,
                    anchor: over[rng.random_range(0..over.len())],
                    positive: over[rng.random_range(0..over.len())],
                    negative: under[rng.random_range(0..under.len())],
                });
            }
        }
        out
    }
}

/// Position pairs `(t, u)`, `u != t`, `|u - t| <= window` inside a walk of
/// `len` nodes.
fn window_offsets(len: usize, window: usize) -> Vec<(u8, u8)> {
    let mut out = Vec::new();
    for t in 0..len {
        let lo = t.saturating_sub(window);
        let hi = (t + window).min(len - 1);
        for u in lo..=hi {
            if u != t {
                out.push((t as u8, u as u8));
            }
        }
    }
    out
}

/// All skip-gram `(center, context)` pairs of the corpus, walk by walk.
/// Pairs whose endpoints are the same node are dropped.
pub fn context_pairs(corpus: &WalkCorpus, window: usize) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
    let offsets = window_offsets(corpus.walk_length(), window);
    (0..corpus.num_walks()).flat_map(move |i| {
        let w = corpus.walk(i);
        offsets
            .clone()
            .into_iter()
            .map(move |(t, u)| (w[t as usize] as NodeId, w[u as usize] as NodeId))
            .filter(|(a, b)| a != b)
    })
}

/// Uniform sampling (with replacement) from the multiset produced by
/// [`context_pairs`] without materializing it.
#[derive(Debug, Clone)]
pub struct PairSampler {
    offsets: Vec<(u8, u8)>,
}

impl PairSampler {
    pub fn new(corpus: &WalkCorpus, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("context window must be positive"));
        }
        if corpus.num_walks() == 0 {
            return Err(Error::invalid("corpus has no walks"));
        }
        Ok(PairSampler {
            offsets: window_offsets(corpus.walk_length(), window),
        })
    }

    /// Every walk contributes the same number of position pairs, so picking a
    /// walk and then a position pair uniformly is uniform over the multiset;
    /// self-pairs are rejected.
    pub fn sample<R: Rng>(&self, corpus: &WalkCorpus, rng: &mut R) -> (NodeId, NodeId) {
        loop {
            let w = corpus.walk(rng.random_range(0..corpus.num_walks()));
            let (t, u) = self.offsets[rng.random_range(0..self.offsets.len())];
            let (a, b) = (w[t as usize], w[u as usize]);
            if a != b {
                return (a as NodeId, b as NodeId);
            }
        }
    }
}
