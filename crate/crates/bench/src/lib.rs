//! Fixtures shared by the benchmarks.

use gralsp_core::graph::{generate_er, generate_triad_circle, AliasSampler, FeatureInit};
use gralsp_core::walks::sample_walks;
use gralsp_core::{Graph, TrainConfig, WalkCorpus};

/// Sparse random graph with expected degree 6 and 16 noise features.
pub fn er_graph(n: usize) -> Graph {
    generate_er(n, 6.0 / n as f64, 7, FeatureInit::Noise(16)).expect("valid ER parameters")
}

pub fn triad_graph() -> Graph {
    generate_triad_circle(100).expect("even circle size")
}

pub fn corpus(g: &Graph, config: &TrainConfig) -> WalkCorpus {
    sample_walks(g, &AliasSampler::uniform(g), config.walk_params(), config.seed).expect("graph has edges")
}
