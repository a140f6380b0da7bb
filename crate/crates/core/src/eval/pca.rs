use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const TOL: f64 = 1e-9;
const MAX_ITERS: usize = 100_000;

fn mat_vec(c: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d).map(|a| c[a * d..(a + 1) * d].iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Dominant eigenpair of a symmetric PSD matrix by power iteration, started
/// from its largest-norm column.
fn dominant(c: &[f64], d: usize) -> (f64, Vec<f64>) {
    let start = (0..d)
        .max_by(|&a, &b| {
            let na: f64 = (0..d).map(|k| c[k * d + a].powi(2)).sum();
            let nb: f64 = (0..d).map(|k| c[k * d + b].powi(2)).sum();
            na.total_cmp(&nb).then(b.cmp(&a))
        })
        .unwrap_or(0);
    let mut v: Vec<f64> = (0..d).map(|k| c[k * d + start]).collect();
    if normalize(&mut v) == 0.0 {
        return (0.0, v);
    }
    for _ in 0..MAX_ITERS {
        let mut w = mat_vec(c, d, &v);
        if normalize(&mut w) == 0.0 {
            return (0.0, w);
        }
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < TOL {
            break;
        }
    }
    let lambda = mat_vec(c, d, &v).iter().zip(&v).map(|(a, b)| a * b).sum();
    (lambda, v)
}

/// Projection of the centered rows onto the two leading principal
/// directions. Each output column is flipped so that its entry of largest
/// magnitude is positive.
pub fn pca_2d(embeddings: &Tensor) -> Result<Tensor> {
    let (n, d) = embeddings.shape();
    if d < 2 || n < 3 {
        return Err(Error::invalid(format!("PCA needs at least 3 points in 2+ dimensions, got {n} x {d}")));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        mean.iter_mut().zip(embeddings.row(r)).for_each(|(m, x)| *m += x / n as f64);
    }
    let centered: Vec<f64> = (0..n)
        .flat_map(|r| embeddings.row(r).iter().zip(&mean).map(|(x, m)| x - m).collect::<Vec<_>>())
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in centered.chunks_exact(d) {
        for a in 0..d {
            for b in a..d {
                cov[a * d + b] += row[a] * row[b] / n as f64;
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[a * d + b] = cov[b * d + a];
        }
    }
    let scale = (0..d).map(|a| cov[a * d + a]).sum::<f64>();
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::Domain("PCA of rank-0 data".into()));
    }

    let (l1, v1) = dominant(&cov, d);
    for a in 0..d {
        for b in 0..d {
            cov[a * d + b] -= l1 * v1[a] * v1[b];
        }
    }
    let (l2, mut v2) = dominant(&cov, d);
    if l2 <= 1e-12 * scale {
        // rank one: any direction orthogonal to v1 carries no variance
        let k = (0..d).min_by(|&a, &b| v1[a].abs().total_cmp(&v1[b].abs())).unwrap_or(0);
        v2 = vec![0.0; d];
        v2[k] = 1.0;
        let p = v1[k];
        v2.iter_mut().zip(&v1).for_each(|(x, y)| *x -= p * y);
        normalize(&mut v2);
    }

    let mut out = vec![0.0; n * 2];
    for (r, row) in centered.chunks_exact(d).enumerate() {
        out[2 * r] = row.iter().zip(&v1).map(|(a, b)| a * b).sum();
        out[2 * r + 1] = row.iter().zip(&v2).map(|(a, b)| a * b).sum();
    }
    for c in 0..2 {
        let lead = (0..n)
            .map(|r| out[2 * r + c])
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            (0..n).for_each(|r| out[2 * r + c] = -out[2 * r + c]);
        }
    }
    Tensor::new(n, 2, out)
}
