//! Synthetic graph generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Features, Graph, Labels, NodeId, MAX_IDENTITY_NODES};
use crate::error::{Error, Result};
use crate::seed::mix;

/// Node features attached to generated graphs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureInit {
    /// One-hot rows (limited to [`MAX_IDENTITY_NODES`]).
    Identity,
    /// `dim` values drawn uniformly from `[-1, 1)`.
    Noise(usize),
    /// A single all-ones column.
    Constant,
}

impl FeatureInit {
    fn build(self, n: usize, seed: u64) -> Result<Features> {
        match self {
            FeatureInit::Identity if n > MAX_IDENTITY_NODES => Err(Error::invalid(format!(
                "identity features refused for {n} nodes (limit {MAX_IDENTITY_NODES})"
            ))),
            FeatureInit::Identity => Ok(Features::Identity(n)),
            FeatureInit::Noise(dim) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xfea7));
                Features::dense(dim, (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            }
            FeatureInit::Constant => Features::dense(1, vec![1.0; n]),
        }
    }
}

/// Visits each index of `0..m` independently with probability `p`, in
/// increasing order, using geometric skips (O(expected hits) time).
fn skip_sample<R: Rng>(m: u64, p: f64, rng: &mut R, mut visit: impl FnMut(u64)) {
    if p <= 0.0 || m == 0 {
        return;
    }
    if p >= 1.0 {
        (0..m).for_each(visit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut k: i128 = -1;
    loop {
        let r: f64 = rng.random();
        let skip = ((1.0 - r).ln() / log_q).floor();
        k += 1 + skip.min(u64::MAX as f64 / 2.0) as i128;
        if k >= m as i128 {
            break;
        }
        visit(k as u64);
    }
}

/// Maps a linear index to the pair `(v, w)` with `w < v` in row-major
/// lower-triangular order.
fn triangular_pair(k: u64) -> (u64, u64) {
    let mut v = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0).floor() as u64;
    while v * (v - 1) / 2 > k {
        v -= 1;
    }
    while (v + 1) * v / 2 <= k {
        v += 1;
    }
    (v, k - v * (v - 1) / 2)
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("edge probability {p} must lie in (0, 1)")))
    }
}

/// Erdős–Rényi `G(n, p)`.
pub fn generate_er(n: usize, p: f64, seed: u64, features: FeatureInit) -> Result<Graph> {
    if n < 2 {
        return Err(Error::invalid("G(n, p) needs n >= 2"));
    }
    check_probability(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let pairs = n as u64 * (n as u64 - 1) / 2;
    skip_sample(pairs, p, &mut rng, |k| {
        let (v, w) = triangular_pair(k);
        edges.push((v as NodeId, w as NodeId));
    });
    let (g, _) = Graph::from_edges(n, &edges)?;
    g.with_features(features.build(n, seed)?)
}

/// Stochastic block model with equal in-block probability `p_in` and
/// cross-block probability `p_out`. Nodes are labeled by block.
pub fn generate_planted_partition(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    seed: u64,
    features: FeatureInit,
) -> Result<Graph> {
    check_probability(p_in)?;
    check_probability(p_out)?;
    if block_sizes.is_empty() || block_sizes.iter().any(|&s| s < 2) {
        return Err(Error::invalid("every block needs at least 2 nodes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![0usize];
    for s in block_sizes {
        starts.push(starts.last().unwrap() + s);
    }
    let n = *starts.last().unwrap();
    let mut edges = Vec::new();
    for (b, &size) in block_sizes.iter().enumerate() {
        let base = starts[b];
        skip_sample(size as u64 * (size as u64 - 1) / 2, p_in, &mut rng, |k| {
            let (v, w) = triangular_pair(k);
            edges.push((base + v as usize, base + w as usize));
        });
        for c in b + 1..block_sizes.len() {
            let (other, other_size) = (starts[c], block_sizes[c]);
            skip_sample(size as u64 * other_size as u64, p_out, &mut rng, |k| {
                let (i, j) = (k / other_size as u64, k % other_size as u64);
                edges.push((base + i as usize, other + j as usize));
            });
        }
    }
    let (g, _) = Graph::from_edges(n, &edges)?;
    let classes = (0..block_sizes.len()).map(|b| b.to_string()).collect();
    let mut assignment = Vec::with_capacity(n);
    for (b, &size) in block_sizes.iter().enumerate() {
        assignment.extend(std::iter::repeat_n(Some(b), size));
    }
    g.with_features(features.build(n, seed)?)?
        .with_labels(Labels::new(classes, assignment)?)
}

/// Pendant nodes hung off each triad.
pub const TRIAD_PENDANTS: usize = 4;

/// Circle of `n` nodes where even positions carry two closed triads and odd
/// positions two open triads.
///
/// Node layout: `0..n` are the circle nodes (labeled `0` for closed-triad,
/// `1` for open-triad), followed per circle node and triad by the two
/// peripheral nodes `a`, `b` and the pendants attached to `a`. Every node
/// has the same constant feature, so any separation must come from
/// structure.
pub fn generate_triad_circle(n: usize) -> Result<Graph> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!("triad circle needs an even n >= 4, got {n}")));
    }
    let per_triad = 2 + TRIAD_PENDANTS;
    let total = n + n * 2 * per_triad;
    let mut edges = Vec::with_capacity(n + n * 2 * (3 + TRIAD_PENDANTS));
    for v in 0..n {
        edges.push((v, (v + 1) % n));
    }
    let mut next = n;
    for v in 0..n {
        let closed = v % 2 == 0;
        for _ in 0..2 {
            let (a, b) = (next, next + 1);
            edges.push((v, a));
            edges.push((v, b));
            if closed {
                edges.push((a, b));
            }
            for k in 0..TRIAD_PENDANTS {
                edges.push((a, next + 2 + k));
            }
            next += per_triad;
        }
    }
    debug_assert_eq!(next, total);
    let (g, _) = Graph::from_edges(total, &edges)?;
    let mut assignment = vec![None; total];
    for (v, slot) in assignment.iter_mut().enumerate().take(n) {
        *slot = Some(v % 2);
    }
    g.with_features(FeatureInit::Constant.build(total, 0)?)?
        .with_labels(Labels::new(vec!["0".into(), "1".into()], assignment)?)
}
