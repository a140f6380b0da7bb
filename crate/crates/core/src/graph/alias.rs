//! Walker/Vose alias tables for O(1) discrete sampling.

use rand::Rng;

use super::{Graph, NodeId};
use crate::error::{Error, Result};

/// Alias table over `0..len` for arbitrary non-negative weights.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let (prob, alias) = build(weights)?;
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        draw(&self.prob, &self.alias, rng)
    }
}

fn build(weights: &[f64]) -> Result<(Vec<f64>, Vec<u32>)> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::invalid("alias table needs at least one weight"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("alias weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("alias weights sum to zero"));
    }
    let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
    let mut alias: Vec<u32> = (0..n as u32).collect();
    let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| prob[i] < 1.0);
    while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
        alias[s] = l as u32;
        prob[l] -= 1.0 - prob[s];
        if prob[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    // leftovers are 1 up to rounding
    for i in large.into_iter().chain(small) {
        prob[i] = 1.0;
    }
    Ok((prob, alias))
}

#[inline]
fn draw<R: Rng + ?Sized>(prob: &[f64], alias: &[u32], rng: &mut R) -> usize {
    let i = rng.random_range(0..prob.len());
    if rng.random::<f64>() < prob[i] {
        i
    } else {
        alias[i] as usize
    }
}

/// Per-node alias tables over neighbor lists, laid out parallel to the
/// graph's adjacency array.
#[derive(Debug, Clone)]
pub struct AliasSampler {
    offsets: Vec<usize>,
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasSampler {
    /// Uniform neighbor selection.
    pub fn uniform(g: &Graph) -> Self {
        let n = g.num_nodes();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut alias = Vec::with_capacity(2 * g.num_edges());
        for v in 0..n {
            alias.extend(0..g.degree(v) as u32);
            offsets.push(alias.len());
        }
        AliasSampler {
            offsets,
            prob: vec![1.0; alias.len()],
            alias,
        }
    }

    /// Neighbor selection proportional to `weight(v, u)`.
    pub fn weighted<W>(g: &Graph, mut weight: W) -> Result<Self>
    where
        W: FnMut(NodeId, NodeId) -> f64,
    {
        let mut offsets = vec![0];
        let mut prob = Vec::with_capacity(2 * g.num_edges());
        let mut alias = Vec::with_capacity(2 * g.num_edges());
        for v in 0..g.num_nodes() {
            let nb = g.neighbors(v);
            if !nb.is_empty() {
                let w: Vec<f64> = nb.iter().map(|&u| weight(v, u)).collect();
                let (p, a) = build(&w)?;
                prob.extend(p);
                alias.extend(a);
            }
            offsets.push(prob.len());
        }
        Ok(AliasSampler {
            offsets,
            prob,
            alias,
        })
    }

    /// Index into `g.neighbors(v)`.
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, v: NodeId, rng: &mut R) -> Result<usize> {
        let (a, b) = (self.offsets[v], self.offsets[v + 1]);
        if a == b {
            return Err(Error::IsolatedNode(v));
        }
        Ok(draw(&self.prob[a..b], &self.alias[a..b], rng))
    }

    #[inline]
    pub fn sample_neighbor<R: Rng + ?Sized>(
        &self,
        g: &Graph,
        v: NodeId,
        rng: &mut R,
    ) -> Result<NodeId> {
        Ok(g.neighbors(v)[self.sample_index(v, rng)?])
    }
}
