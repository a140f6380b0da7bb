use std::io::{BufRead, Write};

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use super::anon::{anonymize_into, PatternRegistry};
use crate::error::{Error, Result};
use crate::graph::{AliasSampler, Graph, NodeId};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkParams {
    /// Walks per node.
    pub walks_per_node: usize,
    /// Walk length in nodes.
    pub walk_length: usize,
}

/// Sampled walks for every node plus the empirical pattern distributions
/// derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    params: WalkParams,
    num_nodes: usize,
    /// `walk_offsets[v]..walk_offsets[v + 1]` are the walk indices of `v`.
    walk_offsets: Vec<usize>,
    nodes: Vec<u32>,
    patterns: Vec<u32>,
    registry: PatternRegistry,
    /// Per node, sorted `(pattern, count)`.
    node_counts: Vec<Vec<(u32, u32)>>,
    /// Per pattern, summed counts over all nodes.
    graph_counts: Vec<u64>,
    active_nodes: usize,
}

impl WalkCorpus {
    fn assemble(
        params: WalkParams,
        num_nodes: usize,
        walk_offsets: Vec<usize>,
        nodes: Vec<u32>,
        mut registry: PatternRegistry,
    ) -> Self {
        let l = params.walk_length;
        let num_walks = nodes.len() / l;
        let mut patterns = Vec::with_capacity(num_walks);
        let mut buf = Vec::with_capacity(l);
        for w in nodes.chunks_exact(l) {
            anonymize_into(w, &mut buf);
            patterns.push(registry.register(&buf));
        }
        let mut graph_counts = vec![0u64; registry.len()];
        let mut active_nodes = 0;
        let node_counts = (0..num_nodes)
            .map(|v| {
                let mut ids: Vec<u32> = patterns[walk_offsets[v]..walk_offsets[v + 1]].to_vec();
                if !ids.is_empty() {
                    active_nodes += 1;
                }
                ids.sort_unstable();
                let mut counts: Vec<(u32, u32)> = Vec::new();
                for id in ids {
                    match counts.last_mut() {
                        Some((last, c)) if *last == id => *c += 1,
                        _ => counts.push((id, 1)),
                    }
                }
                for &(id, c) in &counts {
                    graph_counts[id as usize] += c as u64;
                }
                counts
            })
            .collect();
        WalkCorpus {
            params,
            num_nodes,
            walk_offsets,
            nodes,
            patterns,
            registry,
            node_counts,
            graph_counts,
            active_nodes,
        }
    }

    pub fn params(&self) -> WalkParams {
        self.params
    }

    pub fn walk_length(&self) -> usize {
        self.params.walk_length
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_walks(&self) -> usize {
        self.patterns.len()
    }

    /// Nodes that received walks.
    pub fn active_nodes(&self) -> usize {
        self.active_nodes
    }

    pub fn isolated_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.num_nodes).filter(|&v| self.walk_offsets[v] == self.walk_offsets[v + 1])
    }

    pub fn registry(&self) -> &PatternRegistry {
        &self.registry
    }

    /// Walk indices belonging to `v`.
    pub fn walk_range(&self, v: NodeId) -> std::ops::Range<usize> {
        self.walk_offsets[v]..self.walk_offsets[v + 1]
    }

    pub fn walk(&self, idx: usize) -> &[u32] {
        let l = self.params.walk_length;
        &self.nodes[idx * l..(idx + 1) * l]
    }

    pub fn walk_pattern(&self, idx: usize) -> u32 {
        self.patterns[idx]
    }

    pub fn walks_of(&self, v: NodeId) -> impl Iterator<Item = &[u32]> + '_ {
        self.walk_range(v).map(move |i| self.walk(i))
    }

    /// Sorted `(pattern, occurrences)` among the walks of `v`.
    pub fn node_counts(&self, v: NodeId) -> &[(u32, u32)] {
        &self.node_counts[v]
    }

    /// Empirical pattern distribution of `v`, as sorted `(pattern, p)`.
    pub fn node_dist(&self, v: NodeId) -> Vec<(u32, f64)> {
        let total = self.walk_range(v).len() as f64;
        self.node_counts[v]
            .iter()
            .map(|&(id, c)| (id, c as f64 / total))
            .collect()
    }

    /// Probability of `pattern` at `v` (0 if never observed there).
    pub fn node_probability(&self, v: NodeId, pattern: u32) -> f64 {
        let counts = &self.node_counts[v];
        match counts.binary_search_by_key(&pattern, |&(id, _)| id) {
            Ok(i) => counts[i].1 as f64 / self.walk_range(v).len() as f64,
            Err(_) => 0.0,
        }
    }

    /// Mean of the node distributions over all nodes that have walks, indexed
    /// by pattern id.
    pub fn graph_dist(&self) -> Vec<f64> {
        let denom = (self.active_nodes * self.params.walks_per_node) as f64;
        self.graph_counts.iter().map(|&c| c as f64 / denom).collect()
    }

    /// Exact comparison of `p(pattern | v)` against `p(pattern | G)`.
    ///
    /// Both sides are rationals over the same walk budget, so the comparison
    /// is done on integer counts.
    pub fn compare_to_graph(&self, pattern: u32, count_at_v: u32) -> std::cmp::Ordering {
        let lhs = count_at_v as u128 * self.active_nodes as u128;
        let rhs = self.graph_counts[pattern as usize] as u128;
        lhs.cmp(&rhs)
    }

    /// Writes one line per walk: `<source> <nodes...> | <pattern steps...>`.
    pub fn write_dump<W: Write>(&self, graph: &Graph, mut out: W) -> Result<()> {
        for v in 0..self.num_nodes {
            for i in self.walk_range(v) {
                write!(out, "{}", graph.id(v))?;
                for &u in self.walk(i) {
                    write!(out, " {}", graph.id(u as usize))?;
                }
                write!(out, " |")?;
                for s in &self.registry.pattern(self.patterns[i]).steps {
                    write!(out, " {s}")?;
                }
                writeln!(out)?;
            }
        }
        Ok(())
    }

    /// Reloads a dump produced by [`WalkCorpus::write_dump`], validating every
    /// walk against `graph`.
    pub fn read_dump<R: BufRead>(graph: &Graph, reader: R) -> Result<Self> {
        let n = graph.num_nodes();
        let mut per_node: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n];
        let mut walk_length = None;
        let mut buf = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                source_name: "corpus",
                line: no,
                message,
            };
            let (walk_part, steps_part) = line
                .split_once('|')
                .ok_or_else(|| bad("missing `|` separator".into()))?;
            let mut toks = walk_part.split_whitespace();
            let source = toks.next().ok_or_else(|| bad("empty line".into()))?;
            let lookup = |t: &str| {
                graph
                    .node_index(t)
                    .map(|v| v as u32)
                    .ok_or_else(|| bad(format!("unknown node `{t}`")))
            };
            let src = lookup(source)?;
            let walk = toks.map(lookup).collect::<Result<Vec<u32>>>()?;
            let steps = steps_part
                .split_whitespace()
                .map(|t| t.parse::<u8>().map_err(|_| bad(format!("bad pattern step `{t}`"))))
                .collect::<Result<Vec<u8>>>()?;
            let l = *walk_length.get_or_insert(walk.len());
            if walk.len() != l || l < 2 {
                return Err(bad(format!("walk of length {} (expected {l})", walk.len())));
            }
            if walk[0] != src {
                return Err(bad("walk does not start at its source".into()));
            }
            if walk
                .windows(2)
                .any(|e| !graph.has_edge(e[0] as usize, e[1] as usize))
            {
                return Err(bad("consecutive walk nodes are not adjacent".into()));
            }
            anonymize_into(&walk, &mut buf);
            if buf != steps {
                return Err(bad("pattern does not match walk".into()));
            }
            per_node[src as usize].push(walk);
        }
        let walk_length = walk_length.ok_or_else(|| Error::invalid("corpus dump is empty"))?;
        let gamma = per_node.iter().map(Vec::len).max().unwrap_or(0);
        if per_node.iter().any(|w| !w.is_empty() && w.len() != gamma) {
            return Err(Error::invalid("nodes have differing walk counts"));
        }
        let mut offsets = vec![0usize];
        let mut nodes = Vec::new();
        for walks in &per_node {
            for w in walks {
                nodes.extend_from_slice(w);
            }
            offsets.push(offsets.last().unwrap() + walks.len());
        }
        Ok(WalkCorpus::assemble(
            WalkParams {
                walks_per_node: gamma,
                walk_length,
            },
            n,
            offsets,
            nodes,
            PatternRegistry::new(),
        ))
    }
}

/// Samples `walks_per_node` uniform random walks of `walk_length` nodes from
/// every non-isolated node.
///
/// Node `v` draws from its own stream keyed by `(seed, v)`, so the corpus does
/// not depend on thread count. Isolated nodes get no walks.
pub fn sample_walks(
    graph: &Graph,
    sampler: &AliasSampler,
    params: WalkParams,
    seed: u64,
) -> Result<WalkCorpus> {
    let WalkParams {
        walks_per_node: gamma,
        walk_length: l,
    } = params;
    if l < 2 {
        return Err(Error::invalid("walk length must be at least 2"));
    }
    if gamma == 0 {
        return Err(Error::invalid("need at least one walk per node"));
    }
    let n = graph.num_nodes();
    let active: Vec<NodeId> = (0..n).filter(|&v| graph.degree(v) > 0).collect();
    if active.len() < n {
        warn!("{} isolated node(s) receive no walks", n - active.len());
    }
    let mut nodes = vec![0u32; active.len() * gamma * l];
    nodes
        .par_chunks_mut(gamma * l)
        .zip(active.par_iter())
        .for_each(|(chunk, &v)| {
            let mut rng = seed::stream(seed, &[v as u64]);
            for walk in chunk.chunks_exact_mut(l) {
                fill_walk(graph, sampler, v, walk, &mut rng);
            }
        });
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for v in 0..n {
        let add = if graph.degree(v) > 0 { gamma } else { 0 };
        offsets.push(offsets[v] + add);
    }
    Ok(WalkCorpus::assemble(params, n, offsets, nodes, PatternRegistry::new()))
}

fn fill_walk<R: Rng>(graph: &Graph, sampler: &AliasSampler, start: NodeId, walk: &mut [u32], rng: &mut R) {
    let mut cur = start;
    walk[0] = cur as u32;
    for slot in walk.iter_mut().skip(1) {
        cur = sampler
            .sample_neighbor(graph, cur, rng)
            .expect("walks only start from, and only reach, non-isolated nodes");
        *slot = cur as u32;
    }
}
