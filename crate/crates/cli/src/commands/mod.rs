pub mod bench;
pub mod eval;
pub mod gradcheck;
pub mod synth;
pub mod train;
pub mod walks;

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use crate::config::RunConfig;

#[derive(Args, Debug, Clone)]
pub struct ConfigArg {
    /// Settings file with one `key = value` per line; flags take precedence
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

impl ConfigArg {
    pub fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref())
    }
}

#[derive(Args, Debug, Clone)]
pub struct GraphFlags {
    /// Edge list, one `u v` pair per line
    #[arg(long, value_name = "FILE")]
    pub edges: Option<PathBuf>,
    /// Node features, `<id> <f1> ... <fF>` per line [default: one-hot identity]
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
}

impl GraphFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        c.set("edges", self.edges.as_ref().map(|p| p.display()));
        c.set("features", self.features.as_ref().map(|p| p.display()));
    }
}

#[derive(Args, Debug, Clone)]
pub struct WalkFlags {
    /// Walks per node
    #[arg(long)]
    pub gamma: Option<usize>,
    /// Walk length in nodes
    #[arg(long)]
    pub l: Option<usize>,
}

impl WalkFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        c.set("gamma", self.gamma);
        c.set("l", self.l);
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainFlags {
    #[command(flatten)]
    pub walk: WalkFlags,
    /// Skip-gram window
    #[arg(long)]
    pub window: Option<usize>,
    /// Negative samples per context pair
    #[arg(long)]
    pub neg_k: Option<usize>,
    /// Walks sampled per node and layer during aggregation
    #[arg(long)]
    pub walks_per_layer: Option<usize>,
    /// Weight of the walk-proximity objective
    #[arg(long)]
    pub mu: Option<f64>,
    /// Pattern embedding width
    #[arg(long)]
    pub pattern_dim: Option<usize>,
    /// Hidden layer width
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Output embedding width
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// Aggregation layers
    #[arg(long)]
    pub layers: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Context pairs per iteration
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Walk triples drawn per node each epoch
    #[arg(long)]
    pub triples_per_node: Option<usize>,
    /// Iteration cap
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Iterations without a better moving-average loss before stopping
    #[arg(long)]
    pub patience: Option<usize>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighborhood aggregation
    #[arg(long, value_parser = ["full", "plain-mean"])]
    pub aggregation: Option<String>,
    /// How walk positions are averaged
    #[arg(long, value_parser = ["flat", "per-walk"])]
    pub mean: Option<String>,
    /// Count the center node among its walk neighbors
    #[arg(long, value_name = "BOOL")]
    pub include_source: Option<bool>,
    /// Node objective; `printed` is unbounded below and only for comparison
    #[arg(long, value_parser = ["standard", "printed"])]
    pub loss_form: Option<String>,
    /// Drop the walk-proximity triples entirely
    #[arg(long, value_name = "BOOL")]
    pub withhold_triples: Option<bool>,
}

impl TrainFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        self.walk.apply(c);
        c.set("window", self.window);
        c.set("neg_k", self.neg_k);
        c.set("walks_per_layer", self.walks_per_layer);
        c.set("mu", self.mu);
        c.set("pattern_dim", self.pattern_dim);
        c.set("hidden_dim", self.hidden_dim);
        c.set("output_dim", self.output_dim);
        c.set("layers", self.layers);
        c.set("lr", self.lr);
        c.set("batch_size", self.batch_size);
        c.set("triples_per_node", self.triples_per_node);
        c.set("max_iters", self.max_iters);
        c.set("patience", self.patience);
        c.set("seed", self.seed);
        c.set("aggregation", self.aggregation.as_ref());
        c.set("mean", self.mean.as_ref());
        c.set("include_source", self.include_source);
        c.set("loss_form", self.loss_form.as_ref());
        c.set("withhold_triples", self.withhold_triples);
    }
}
