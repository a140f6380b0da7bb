use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;
use crate::walks::{PatternRegistry, WalkCorpus};

/// Parameter group names in the order used by [`ModelParams::tensors`].
pub const PARAM_GROUPS: [&str; 7] = ["walk_table", "U", "V", "P", "b", "Q", "r"];

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `dim_k x dim_{k-1}`, applied to the node's own previous state.
    pub u: Tensor,
    /// `dim_k x dim_{k-1}`, applied to the aggregated neighborhood.
    pub v: Tensor,
    /// `1 x d'` attention projection.
    pub p: Tensor,
    /// `1 x 1` attention bias.
    pub b: Tensor,
    /// `dim_{k-1} x d'` gate projection.
    pub q: Tensor,
    /// `1 x dim_{k-1}` gate bias.
    pub r: Tensor,
}

/// All trainable tensors plus the pattern registry their embedding rows
/// refer to. The last walk-table row embeds patterns the registry lacks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub walk_table: Tensor,
    pub layers: Vec<LayerParams>,
    pub registry: PatternRegistry,
}

fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_parts(rows, cols, data)
}

impl ModelParams {
    /// Glorot-uniform weights, `N(0, 0.1)` pattern embeddings, zero biases.
    pub fn init(config: ModelConfig, registry: PatternRegistry, seed: u64) -> Result<Self> {
        config.validate()?;
        let dims = config.dims();
        let d = config.pattern_dim;
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        let mut rng = seed::stream(seed, &[0]);
        let rows = registry.len() + 1;
        let walk_table = Tensor::from_parts(
            rows,
            d,
            (0..rows * d).map(|_| normal.sample(&mut rng)).collect(),
        );
        let layers = (1..=config.layers)
            .map(|k| {
                let mut rng = seed::stream(seed, &[k as u64]);
                let (din, dout) = (dims[k - 1], dims[k]);
                LayerParams {
                    u: glorot(dout, din, &mut rng),
                    v: glorot(dout, din, &mut rng),
                    p: glorot(1, d, &mut rng),
                    b: Tensor::zeros(1, 1),
                    q: glorot(din, d, &mut rng),
                    r: Tensor::zeros(1, din),
                }
            })
            .collect();
        Ok(ModelParams {
            config,
            walk_table,
            layers,
            registry,
        })
    }

    pub fn unknown_pattern_row(&self) -> usize {
        self.walk_table.rows() - 1
    }

    /// Walk-table row for every pattern id of `corpus`.
    pub fn pattern_rows(&self, corpus: &WalkCorpus) -> Vec<usize> {
        let reg = corpus.registry();
        if *reg == self.registry {
            return (0..reg.len()).collect();
        }
        reg.patterns()
            .iter()
            .map(|p| {
                self.registry
                    .get(&p.steps)
                    .map_or(self.unknown_pattern_row(), |id| id as usize)
            })
            .collect()
    }

    /// Tensors in canonical order: walk table, then per layer U, V, P, b, Q, r.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.walk_table];
        for l in &self.layers {
            out.extend([&l.u, &l.v, &l.p, &l.b, &l.q, &l.r]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.walk_table];
        for l in &mut self.layers {
            out.extend([&mut l.u, &mut l.v, &mut l.p, &mut l.b, &mut l.q, &mut l.r]);
        }
        out
    }

    /// Names matching [`ModelParams::tensors`], e.g. `U1`, `r2`.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = vec!["walk_table".to_string()];
        for k in 1..=self.layers.len() {
            out.extend(PARAM_GROUPS[1..].iter().map(|g| format!("{g}{k}")));
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Records every tensor on `tape` as a leaf.
    pub fn record(&self, tape: &mut Tape, requires_grad: bool) -> ParamVars {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| tape.leaf(&t.clone().with_requires_grad(requires_grad)))
            .collect();
        ParamVars::from_slice(&vars).expect("canonical tensor count")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub u: Var,
    pub v: Var,
    pub p: Var,
    pub b: Var,
    pub q: Var,
    pub r: Var,
}

/// Tape handles for a [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub walk_table: Var,
    pub layers: Vec<LayerVars>,
}

impl ParamVars {
    /// Inverse of the canonical order of [`ModelParams::tensors`].
    pub fn from_slice(vars: &[Var]) -> Result<Self> {
        if vars.is_empty() || !(vars.len() - 1).is_multiple_of(6) {
            return Err(Error::invalid(format!("{} tensors do not form a model", vars.len())));
        }
        let layers = vars[1..]
            .chunks_exact(6)
            .map(|c| LayerVars {
                u: c[0],
                v: c[1],
                p: c[2],
                b: c[3],
                q: c[4],
                r: c[5],
            })
            .collect();
        Ok(ParamVars {
            walk_table: vars[0],
            layers,
        })
    }

    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.walk_table];
        for l in &self.layers {
            out.extend([l.u, l.v, l.p, l.b, l.q, l.r]);
        }
        out
    }
}
