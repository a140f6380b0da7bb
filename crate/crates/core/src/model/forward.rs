use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rayon::prelude::*;

use super::{Aggregation, MeanMode, ModelConfig, ModelParams, ParamVars};
use crate::autodiff::{SparseRows, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::seed;
use crate::walks::WalkCorpus;

/// One walk drawn for a node at some layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWalk {
    pub pattern_row: usize,
    pub radius: usize,
    /// Walk positions inside the radius that enter the neighborhood mean.
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodSample {
    pub node: NodeId,
    pub walks: Vec<SampledWalk>,
}

/// Draws `walks_per_layer` of the stored walks of `v`, uniformly with
/// replacement. The draw depends only on `(seed, layer, v)`.
pub fn sample_neighborhood(
    corpus: &WalkCorpus,
    config: &ModelConfig,
    pattern_rows: &[usize],
    v: NodeId,
    layer: usize,
    seed: u64,
) -> NeighborhoodSample {
    let mut walks = Vec::new();
    for_each_sampled_walk(corpus, config, v, layer, seed, |pid, radius, nodes| {
        walks.push(SampledWalk {
            pattern_row: pattern_rows[pid as usize],
            radius,
            nodes: nodes.iter().map(|&u| u as NodeId).collect(),
        });
    });
    NeighborhoodSample { node: v, walks }
}

/// Calls `f(pattern, radius, in_radius_nodes)` for each walk drawn for `v`.
fn for_each_sampled_walk(
    corpus: &WalkCorpus,
    config: &ModelConfig,
    v: NodeId,
    layer: usize,
    seed: u64,
    mut f: impl FnMut(u32, usize, &[u32]),
) {
    let range = corpus.walk_range(v);
    if range.is_empty() {
        return;
    }
    let mut rng = seed::stream(seed, &[layer as u64, v as u64]);
    let l = corpus.walk_length();
    let start = usize::from(!config.include_source);
    for _ in 0..config.walks_per_layer {
        let idx = rng.random_range(range.clone());
        let pid = corpus.walk_pattern(idx);
        let radius = match config.aggregation {
            Aggregation::Full => corpus.registry().pattern(pid).receptive_radius,
            Aggregation::PlainMean => 2.min(l),
        };
        f(pid, radius, &corpus.walk(idx)[start..radius]);
    }
}

/// Invariant monitor for attention, gates and radii seen during forwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicsStats {
    pub forward_calls: usize,
    /// Largest `|sum(lambda) - 1|` over all node samples.
    pub max_attention_deviation: f64,
    pub gate_min: f64,
    pub gate_max: f64,
    pub radius_min: usize,
    pub radius_max: usize,
}

impl Default for MechanicsStats {
    fn default() -> Self {
        MechanicsStats {
            forward_calls: 0,
            max_attention_deviation: 0.0,
            gate_min: f64::INFINITY,
            gate_max: f64::NEG_INFINITY,
            radius_min: usize::MAX,
            radius_max: 0,
        }
    }
}

impl MechanicsStats {
    pub fn merge(&mut self, other: &MechanicsStats) {
        self.forward_calls += other.forward_calls;
        self.max_attention_deviation = self.max_attention_deviation.max(other.max_attention_deviation);
        self.gate_min = self.gate_min.min(other.gate_min);
        self.gate_max = self.gate_max.max(other.gate_max);
        self.radius_min = self.radius_min.min(other.radius_min);
        self.radius_max = self.radius_max.max(other.radius_max);
    }

    /// Gates strictly inside (0, 1), or no gates observed.
    pub fn gates_in_open_unit(&self) -> bool {
        self.gate_min > self.gate_max || (self.gate_min > 0.0 && self.gate_max < 1.0)
    }
}

#[derive(Debug, Clone)]
struct LayerPlan {
    num_out: usize,
    self_rows: Rc<[usize]>,
    /// Walks of output node `i` are `seg_offsets[i]..seg_offsets[i + 1]`.
    seg_offsets: Rc<[usize]>,
    /// Per walk, index into `unique_rows`.
    walk_slot: Rc<[usize]>,
    unique_rows: Rc<[usize]>,
    /// Per walk, sum (or mean) of the previous-layer rows in its radius.
    walk_sum: Rc<SparseRows>,
    /// Per output node, weights over its walks.
    node_mean: Rc<SparseRows>,
    radius_min: usize,
    radius_max: usize,
}

/// Index structure of a batched forward: the sampled computation tree,
/// flattened layer by layer.
#[derive(Debug, Clone)]
pub struct ForwardPlan {
    layers: Vec<LayerPlan>,
    input_nodes: Vec<NodeId>,
    output_nodes: Vec<NodeId>,
    batch_rows: Vec<usize>,
}

impl ForwardPlan {
    /// Distinct target nodes, in first-appearance order; these are the rows
    /// of [`ForwardOutput::embeddings`].
    pub fn output_nodes(&self) -> &[NodeId] {
        &self.output_nodes
    }

    /// For each entry of the batch, its row among the output nodes.
    pub fn batch_rows(&self) -> &[usize] {
        &self.batch_rows
    }

    /// Nodes whose features enter the first layer.
    pub fn input_nodes(&self) -> &[NodeId] {
        &self.input_nodes
    }
}

/// Distinct nodes in insertion order, indexed through a dense map.
struct Frontier {
    nodes: Vec<NodeId>,
    index: Vec<u32>,
}

impl Frontier {
    fn new(num_nodes: usize) -> Self {
        Frontier {
            nodes: Vec::new(),
            index: vec![u32::MAX; num_nodes],
        }
    }

    fn insert(&mut self, v: NodeId) -> usize {
        if self.index[v] == u32::MAX {
            self.index[v] = self.nodes.len() as u32;
            self.nodes.push(v);
        }
        self.index[v] as usize
    }
}

/// Samples the computation tree for `batch`.
pub fn build_plan(
    batch: &[NodeId],
    corpus: &WalkCorpus,
    params: &ModelParams,
    pattern_rows: &[usize],
    seed: u64,
) -> Result<ForwardPlan> {
    let config = &params.config;
    let n = corpus.num_nodes();
    let mut top = Frontier::new(n);
    let mut batch_rows = Vec::with_capacity(batch.len());
    for &v in batch {
        if v >= corpus.num_nodes() {
            return Err(Error::invalid(format!("node {v} is not in the corpus")));
        }
        batch_rows.push(top.insert(v));
    }
    let output_nodes = top.nodes.clone();
    let mut current = top.nodes;
    let mut layers = Vec::with_capacity(config.layers);
    for k in (1..=config.layers).rev() {
        let mut prev = Frontier::new(n);
        for &v in &current {
            prev.insert(v);
        }
        let mut seg_offsets = vec![0];
        let mut walk_slot = Vec::new();
        let mut slots: HashMap<usize, usize> = HashMap::new();
        let mut unique_rows = Vec::new();
        let mut walk_sum = SparseRows::new();
        let mut node_mean = SparseRows::new();
        let (mut radius_min, mut radius_max) = (usize::MAX, 0);
        for &v in &current {
            let first = walk_slot.len();
            let mut total = 0;
            for_each_sampled_walk(corpus, config, v, k, seed, |pid, radius, nodes| {
                radius_min = radius_min.min(radius);
                radius_max = radius_max.max(radius);
                let row = pattern_rows[pid as usize];
                let slot = *slots.entry(row).or_insert_with(|| {
                    unique_rows.push(row);
                    unique_rows.len() - 1
                });
                walk_slot.push(slot);
                let weight = match config.mean {
                    MeanMode::Flat => 1.0,
                    MeanMode::PerWalk => 1.0 / nodes.len() as f64,
                };
                total += nodes.len();
                walk_sum.push_row(nodes.iter().map(|&u| (prev.insert(u as NodeId), weight)));
            });
            let count = walk_slot.len() - first;
            let weight = match config.mean {
                MeanMode::Flat => 1.0 / total.max(1) as f64,
                MeanMode::PerWalk => 1.0 / count.max(1) as f64,
            };
            node_mean.push_row((first..first + count).map(|i| (i, weight)));
            seg_offsets.push(walk_slot.len());
        }
        layers.push(LayerPlan {
            num_out: current.len(),
            self_rows: (0..current.len()).collect(),
            seg_offsets: seg_offsets.into(),
            walk_slot: walk_slot.into(),
            unique_rows: unique_rows.into(),
            walk_sum: Rc::new(walk_sum),
            node_mean: Rc::new(node_mean),
            radius_min,
            radius_max,
        });
        current = prev.nodes;
    }
    layers.reverse();
    Ok(ForwardPlan {
        layers,
        input_nodes: current,
        output_nodes,
        batch_rows,
    })
}

pub struct ForwardOutput {
    /// One row per [`ForwardPlan::output_nodes`] entry.
    pub embeddings: Var,
    pub stats: MechanicsStats,
}

fn input_matrix(graph: &Graph, nodes: &[NodeId]) -> Result<Tensor> {
    let features = graph
        .features()
        .ok_or_else(|| Error::invalid("graph has no node features"))?;
    let dim = features.dim();
    let mut data = vec![0.0; nodes.len() * dim];
    for (row, &v) in data.chunks_exact_mut(dim).zip(nodes) {
        features.copy_row(v, row);
    }
    Ok(Tensor::from_parts(nodes.len(), dim, data))
}

/// Records the K-layer aggregation of `plan` on `tape`.
pub fn forward(
    tape: &mut Tape,
    vars: &ParamVars,
    config: &ModelConfig,
    graph: &Graph,
    plan: &ForwardPlan,
) -> Result<ForwardOutput> {
    let x = input_matrix(graph, &plan.input_nodes)?;
    if x.cols() != config.input_dim {
        return Err(Error::Shape {
            op: "forward",
            detail: format!("features have {} columns, model expects {}", x.cols(), config.input_dim),
        });
    }
    let mut stats = MechanicsStats {
        forward_calls: 1,
        ..Default::default()
    };
    let mut h = tape.constant(x);
    for (lp, lv) in plan.layers.iter().zip(&vars.layers) {
        let own = tape.gather_rows(h, lp.self_rows.clone())?;
        let (weight, gate) = if config.aggregation == Aggregation::Full {
            let u = tape.gather_rows(vars.walk_table, lp.unique_rows.clone())?;
            let scores = tape.matmul_t(u, lv.p)?;
            let scores = tape.add(scores, lv.b)?;
            let gates = tape.matmul_t(u, lv.q)?;
            let gates = tape.add(gates, lv.r)?;
            let gates = tape.sigmoid(gates)?;
            let walk_scores = tape.gather_rows(scores, lp.walk_slot.clone())?;
            let lambda = tape.segment_softmax(walk_scores, lp.seg_offsets.clone())?;

            let lam = tape.value(lambda).data();
            for w in lp.seg_offsets.windows(2).filter(|w| w[1] > w[0]) {
                let dev = (lam[w[0]..w[1]].iter().sum::<f64>() - 1.0).abs();
                stats.max_attention_deviation = stats.max_attention_deviation.max(dev);
            }
            for &g in tape.value(gates).data() {
                stats.gate_min = stats.gate_min.min(g);
                stats.gate_max = stats.gate_max.max(g);
            }
            (lambda, Some((gates, lp.walk_slot.clone())))
        } else {
            (tape.constant(Tensor::full(lp.walk_sum.num_rows(), 1, 1.0)), None)
        };
        stats.radius_min = stats.radius_min.min(lp.radius_min);
        stats.radius_max = stats.radius_max.max(lp.radius_max);
        let agg = tape.pool(h, weight, gate, lp.walk_sum.clone(), lp.node_mean.clone())?;
        let a = tape.matmul_t(own, lv.u)?;
        let b = tape.matmul_t(agg, lv.v)?;
        let pre = tape.add(a, b)?;
        h = tape.relu(pre)?;
        debug_assert_eq!(tape.shape(h).0, lp.num_out);
    }
    Ok(ForwardOutput { embeddings: h, stats })
}

/// Embeddings of every node, computed in independent chunks. Neighborhood
/// draws are keyed by `(seed, layer, node)`, so the result does not depend
/// on `chunk_size` or on the thread count.
pub fn embed_all(
    graph: &Graph,
    corpus: &WalkCorpus,
    params: &ModelParams,
    seed: u64,
    chunk_size: usize,
) -> Result<(Tensor, MechanicsStats)> {
    let n = graph.num_nodes();
    let rows = params.pattern_rows(corpus);
    let nodes: Vec<NodeId> = (0..n).collect();
    let parts: Vec<Result<(Vec<f64>, MechanicsStats)>> = nodes
        .par_chunks(chunk_size.max(1))
        .map(|chunk| {
            let mut tape = Tape::new();
            let vars = params.record(&mut tape, false);
            let plan = build_plan(chunk, corpus, params, &rows, seed)?;
            let out = forward(&mut tape, &vars, &params.config, graph, &plan)?;
            Ok((tape.value(out.embeddings).data().to_vec(), out.stats))
        })
        .collect();
    let dim = params.config.output_dim;
    let mut data = Vec::with_capacity(n * dim);
    let mut stats = MechanicsStats::default();
    for part in parts {
        let (d, s) = part?;
        data.extend(d);
        stats.merge(&s);
    }
    Ok((Tensor::new(n, dim, data)?, stats))
}

fn layer(params: &ModelParams, k: usize) -> Result<&super::LayerParams> {
    k.checked_sub(1)
        .and_then(|i| params.layers.get(i))
        .ok_or_else(|| Error::invalid(format!("layer {k} out of range")))
}

fn pattern_embedding(params: &ModelParams, row: usize) -> Result<&[f64]> {
    if row >= params.walk_table.rows() {
        return Err(Error::invalid(format!("pattern row {row} out of range")));
    }
    Ok(params.walk_table.row(row))
}

/// Per-walk attention weights at layer `k` (1-based) for walks with the
/// given pattern rows.
pub fn attention_coeffs(params: &ModelParams, k: usize, pattern_rows: &[usize]) -> Result<Vec<f64>> {
    if pattern_rows.is_empty() {
        return Err(Error::invalid("attention over an empty walk sample"));
    }
    let lp = layer(params, k)?;
    let b = lp.b.data()[0];
    let scores = pattern_rows
        .iter()
        .map(|&r| {
            let u = pattern_embedding(params, r)?;
            Ok(lp.p.data().iter().zip(u).map(|(p, x)| p * x).sum::<f64>() + b)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Channel gate at layer `k` for a walk with the given pattern row.
pub fn amplification_gate(params: &ModelParams, k: usize, pattern_row: usize) -> Result<Vec<f64>> {
    let lp = layer(params, k)?;
    let u = pattern_embedding(params, pattern_row)?;
    Ok((0..lp.q.rows())
        .map(|c| {
            let z: f64 = lp.q.row(c).iter().zip(u).map(|(q, x)| q * x).sum::<f64>() + lp.r.data()[c];
            crate::autodiff::sigmoid(z)
        })
        .collect())
}

/// Layer-`k` representation of `sample.node` from previous-layer vectors.
pub fn aggregate_layer(
    params: &ModelParams,
    k: usize,
    h_prev: &HashMap<NodeId, Vec<f64>>,
    sample: &NeighborhoodSample,
) -> Result<Vec<f64>> {
    let lp = layer(params, k)?;
    let config = &params.config;
    let din = lp.u.cols();
    let lookup = |v: NodeId| {
        h_prev
            .get(&v)
            .filter(|h| h.len() == din)
            .ok_or_else(|| Error::invalid(format!("no layer-{} vector for node {v}", k - 1)))
    };
    let own = lookup(sample.node)?;
    let mut a = vec![0.0; din];
    if !sample.walks.is_empty() {
        let rows: Vec<usize> = sample.walks.iter().map(|w| w.pattern_row).collect();
        let lambda = match config.aggregation {
            Aggregation::Full => attention_coeffs(params, k, &rows)?,
            Aggregation::PlainMean => vec![1.0; rows.len()],
        };
        let total: usize = sample.walks.iter().map(|w| w.nodes.len()).sum();
        for (w, lam) in sample.walks.iter().zip(lambda) {
            let gate = match config.aggregation {
                Aggregation::Full => amplification_gate(params, k, w.pattern_row)?,
                Aggregation::PlainMean => vec![1.0; din],
            };
            let norm = match config.mean {
                MeanMode::Flat => total as f64,
                MeanMode::PerWalk => (sample.walks.len() * w.nodes.len()) as f64,
            };
            let mut sum = vec![0.0; din];
            for &u in &w.nodes {
                for (s, x) in sum.iter_mut().zip(lookup(u)?) {
                    *s += x;
                }
            }
            for c in 0..din {
                a[c] += lam * gate[c] * sum[c] / norm;
            }
        }
    }
    Ok((0..lp.u.rows())
        .map(|r| {
            let z: f64 = lp.u.row(r).iter().zip(own).map(|(x, y)| x * y).sum::<f64>()
                + lp.v.row(r).iter().zip(&a).map(|(x, y)| x * y).sum::<f64>();
            z.max(0.0)
        })
        .collect())
}
