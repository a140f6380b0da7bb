use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::metrics::f1_scores;
use super::EvalReport;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::seed;

const SPLIT_RETRIES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOptions {
    pub test_frac: f64,
    pub repeats: usize,
    pub seed: u64,
    pub epochs: usize,
    pub weight_decay: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            test_frac: 0.2,
            repeats: 10,
            seed: 0,
            epochs: 300,
            weight_decay: 1e-4,
        }
    }
}

/// Multinomial logistic regression on standardized inputs, fitted by full
/// batch gradient descent with step `1 / L` (`L` bounds the curvature of the
/// regularized cross-entropy).
#[derive(Debug, Clone)]
pub struct SoftmaxRegression {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `(dim + 1) x classes`, bias in the last row.
    weights: Vec<f64>,
    classes: usize,
}

impl SoftmaxRegression {
    /// `x` is row-major `n x dim`.
    pub fn fit(
        x: &[f64],
        dim: usize,
        y: &[usize],
        classes: usize,
        epochs: usize,
        weight_decay: f64,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 || dim == 0 || x.len() != n * dim || classes < 2 {
            return Err(Error::invalid("classifier needs a non-empty n x dim design and two classes"));
        }
        if y.iter().any(|&c| c >= classes) {
            return Err(Error::invalid("class index out of range"));
        }
        let mut mean = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n as f64);
        }
        let mut var = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n as f64;
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|&v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        let mut model = SoftmaxRegression {
            mean,
            scale,
            weights: vec![0.0; (dim + 1) * classes],
            classes,
        };
        let z: Vec<f64> = x.chunks_exact(dim).flat_map(|r| model.augment(r)).collect();
        let d1 = dim + 1;
        let step = 1.0 / (0.5 * top_eigenvalue(&gram(&z, d1, n), d1) + weight_decay);

        let mut probs = vec![0.0; classes];
        let mut grad = vec![0.0; d1 * classes];
        for _ in 0..epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (zi, &yi) in z.chunks_exact(d1).zip(y) {
                model.scores(zi, &mut probs);
                softmax(&mut probs);
                probs[yi] -= 1.0;
                for (j, &zj) in zi.iter().enumerate() {
                    for (g, p) in grad[j * classes..(j + 1) * classes].iter_mut().zip(&probs) {
                        *g += zj * p / n as f64;
                    }
                }
            }
            for (k, (w, g)) in model.weights.iter_mut().zip(&grad).enumerate() {
                let decay = if k < dim * classes { weight_decay * *w } else { 0.0 };
                *w -= step * (g + decay);
            }
        }
        Ok(model)
    }

    fn augment(&self, row: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = row
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect();
        z.push(1.0);
        z
    }

    fn scores(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &zj) in z.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(&self.weights[j * self.classes..(j + 1) * self.classes]) {
                *o += zj * w;
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let mut s = vec![0.0; self.classes];
        self.scores(&self.augment(row), &mut s);
        // first maximum wins
        s.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
            .0
    }
}

fn softmax(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    x.iter_mut().for_each(|v| *v /= total);
}

/// `Z^T Z / n` for row-major `z` with `d` columns.
fn gram(z: &[f64], d: usize, n: usize) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for row in z.chunks_exact(d) {
        for a in 0..d {
            for b in 0..d {
                g[a * d + b] += row[a] * row[b] / n as f64;
            }
        }
    }
    g
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
fn top_eigenvalue(m: &[f64], d: usize) -> f64 {
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w: Vec<f64> = (0..d).map(|a| (0..d).map(|b| m[a * d + b] * v[b]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / norm).collect();
        let done = (norm - lambda).abs() <= 1e-12 * norm;
        lambda = norm;
        if done {
            break;
        }
    }
    lambda
}

/// A labeled example: class and embedding row.
struct Example<'a> {
    class: usize,
    row: &'a [f64],
}

/// Per class, the share drawn for testing is `test_frac` of its members with
/// the fractional part resolved by a coin flip.
fn stratified_split<'a, R: Rng>(
    by_class: &[Vec<Example<'a>>],
    test_frac: f64,
    rng: &mut R,
) -> (Vec<&'a [f64]>, Vec<usize>, Vec<&'a [f64]>, Vec<usize>) {
    let (mut xtr, mut ytr, mut xte, mut yte) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for members in by_class {
        let mut idx: Vec<usize> = (0..members.len()).collect();
        idx.shuffle(rng);
        let exact = test_frac * members.len() as f64;
        let mut k = exact.floor() as usize;
        if rng.random::<f64>() < exact - exact.floor() {
            k += 1;
        }
        for (pos, &i) in idx.iter().enumerate() {
            let e = &members[i];
            if pos < k {
                xte.push(e.row);
                yte.push(e.class);
            } else {
                xtr.push(e.row);
                ytr.push(e.class);
            }
        }
    }
    (xtr, ytr, xte, yte)
}

fn lexical(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Repeated train/test evaluation of a softmax-regression probe on the
/// labeled rows of `embeddings`.
///
/// Examples are ordered by class and embedding value before splitting, so
/// the metrics do not depend on how nodes are numbered.
pub fn classify(embeddings: &Tensor, labels: &Labels, opts: &ClassifyOptions) -> Result<EvalReport> {
    if !(opts.test_frac > 0.0 && opts.test_frac < 1.0) {
        return Err(Error::invalid(format!("test fraction {} must lie in (0, 1)", opts.test_frac)));
    }
    if opts.repeats == 0 {
        return Err(Error::invalid("need at least one repeat"));
    }
    let num_classes = labels.num_classes();
    let mut by_class: Vec<Vec<Example>> = (0..num_classes).map(|_| Vec::new()).collect();
    for (v, c) in labels.labeled() {
        if v >= embeddings.rows() {
            return Err(Error::invalid(format!("labeled node {v} has no embedding")));
        }
        by_class[c].push(Example {
            class: c,
            row: embeddings.row(v),
        });
    }
    for members in &mut by_class {
        members.sort_by(|a, b| lexical(a.row, b.row));
    }
    let dim = embeddings.cols();
    let seeds: Vec<u64> = (0..opts.repeats as u64).map(|r| seed::derive(opts.seed, &[r])).collect();
    let runs = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = seed::stream(s, &[]);
            for _ in 0..SPLIT_RETRIES {
                let (xtr, ytr, xte, yte) = stratified_split(&by_class, opts.test_frac, &mut rng);
                let mut seen = vec![false; num_classes];
                ytr.iter().for_each(|&c| seen[c] = true);
                if seen.iter().any(|s| !s) || xte.is_empty() {
                    continue;
                }
                let flat: Vec<f64> = xtr.concat();
                let model =
                    SoftmaxRegression::fit(&flat, dim, &ytr, num_classes, opts.epochs, opts.weight_decay)?;
                let pred: Vec<usize> = xte.iter().map(|r| model.predict(r)).collect();
                let (macro_f1, micro_f1) = f1_scores(&yte, &pred, num_classes)?;
                let accuracy =
                    pred.iter().zip(&yte).filter(|(p, t)| p == t).count() as f64 / yte.len() as f64;
                debug_assert_eq!(micro_f1, accuracy);
                return Ok(vec![("macro_f1", macro_f1), ("micro_f1", micro_f1)]);
            }
            Err(Error::invalid(format!(
                "no split with every class in training after {SPLIT_RETRIES} draws"
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_runs("classify", seeds, runs)
}
