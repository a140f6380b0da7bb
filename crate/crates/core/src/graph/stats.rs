use super::Graph;
use crate::error::{Error, Result};

/// Degree and clustering summary of a graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub avg_degree: f64,
    pub max_degree: usize,
    /// Mean local clustering coefficient; nodes with degree < 2 count as 0.
    pub clustering: f64,
}

pub fn degree_stats(g: &Graph) -> Result<DegreeStats> {
    let n = g.num_nodes();
    if n == 0 || g.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut total = 0.0;
    for v in 0..n {
        let nb = g.neighbors(v);
        let d = nb.len();
        if d < 2 {
            continue;
        }
        let mut links = 0usize;
        for (i, &a) in nb.iter().enumerate() {
            links += count_common_above(g.neighbors(a), &nb[i + 1..]);
        }
        total += 2.0 * links as f64 / (d * (d - 1)) as f64;
    }
    Ok(DegreeStats {
        avg_degree: 2.0 * g.num_edges() as f64 / n as f64,
        max_degree: g.max_degree(),
        clustering: total / n as f64,
    })
}

/// Size of the intersection of two sorted lists.
fn count_common_above(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Expected number of edges in an ego network of a power-law graph with
/// average degree `d`, maximum degree `d_max` and clustering coefficient `c`.
///
/// Singular at `d = 2`; only defined for `d > 2`.
pub fn expected_ego_edges(d: f64, d_max: usize, c: f64) -> Result<f64> {
    if !(d > 2.0) {
        return Err(Error::Domain(format!(
            "average degree {d} must exceed 2 (the formula divides by d - 2)"
        )));
    }
    if (d_max as f64) < d {
        return Err(Error::Domain(format!("max degree {d_max} below average degree {d}")));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Domain(format!("clustering coefficient {c} outside [0, 1]")));
    }
    let growth = (d_max as f64).powf((d - 2.0) / (d - 1.0)) - 1.0;
    Ok((1.0 - c / 2.0) * d + c * d / (2.0 * (d - 2.0)) * growth)
}
