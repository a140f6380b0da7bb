use super::classify::{classify, ClassifyOptions};
use super::EvalReport;
use crate::error::{Error, Result};
use crate::graph::generate_triad_circle;
use crate::model::Aggregation;
use crate::train::{train_graph, TrainConfig};

pub const TRIAD_REPEATS: usize = 5;

#[derive(Debug, Clone)]
pub struct TriadOutcome {
    /// Full model.
    pub gralsp: EvalReport,
    /// Plain mean over radius-2 walk prefixes, no attention or gates.
    pub ablation: EvalReport,
}

impl TriadOutcome {
    pub fn accuracy(&self) -> f64 {
        self.gralsp.mean("micro_f1").unwrap_or(0.0)
    }

    pub fn ablation_accuracy(&self) -> f64 {
        self.ablation.mean("micro_f1").unwrap_or(0.0)
    }
}

/// Trains on the triad circle of `n` nodes with and without the structural
/// mechanisms and classifies the circle nodes (closed vs open triads).
pub fn triad_separability(n: usize, config: &TrainConfig, seed: u64) -> Result<TriadOutcome> {
    let g = generate_triad_circle(n)?;
    let labels = g.labels().ok_or_else(|| Error::invalid("triad circle lacks labels"))?;
    let opts = ClassifyOptions {
        repeats: TRIAD_REPEATS,
        seed,
        ..ClassifyOptions::default()
    };
    let run = |aggregation| -> Result<EvalReport> {
        let cfg = TrainConfig {
            aggregation,
            seed,
            ..config.clone()
        };
        let out = train_graph(&g, &cfg)?;
        classify(&out.embeddings, labels, &opts)
    };
    Ok(TriadOutcome {
        gralsp: run(Aggregation::Full)?,
        ablation: run(Aggregation::PlainMean)?,
    })
}
