//! The aggregation network: pattern embeddings, per-walk attention and
//! channel gates, and K layers of neighborhood aggregation.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use forward::{
    aggregate_layer, amplification_gate, attention_coeffs, build_plan, embed_all, forward,
    sample_neighborhood, ForwardOutput, ForwardPlan, MechanicsStats, NeighborhoodSample,
    SampledWalk,
};
pub use params::{LayerParams, LayerVars, ModelParams, ParamVars, PARAM_GROUPS};

/// How neighbor representations are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Attention and gates from pattern embeddings, walk-dependent radius.
    Full,
    /// Plain mean over the first two nodes of each walk; pattern embeddings
    /// are ignored.
    PlainMean,
}

/// Normalization of the neighborhood mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    /// One pooled mean over every (walk, position) pair.
    Flat,
    /// Mean over walks of the per-walk position means.
    PerWalk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub layers: usize,
    /// Width of the pattern embeddings.
    pub pattern_dim: usize,
    /// Walks sampled per node at each layer.
    pub walks_per_layer: usize,
    pub aggregation: Aggregation,
    pub mean: MeanMode,
    /// Whether the first walk node (the center itself) takes part in the
    /// neighborhood mean.
    pub include_source: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden_dim: 100,
            output_dim: 32,
            layers: 2,
            pattern_dim: 30,
            walks_per_layer: 20,
            aggregation: Aggregation::Full,
            mean: MeanMode::Flat,
            include_source: true,
        }
    }

    /// `dims()[k]` is the width of layer `k`; `dims()[0]` is the input.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        for k in 1..=self.layers {
            d.push(if k == self.layers { self.output_dim } else { self.hidden_dim });
        }
        d
    }

    pub fn validate(&self) -> crate::Result<()> {
        let fields = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
            ("layers", self.layers),
            ("pattern_dim", self.pattern_dim),
            ("walks_per_layer", self.walks_per_layer),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(crate::Error::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
