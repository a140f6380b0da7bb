use anyhow::{bail, Result};
use clap::Args;
use gralsp_core::graph::{generate_er, AliasSampler, FeatureInit};
use gralsp_core::train::objective_gradcheck;
use gralsp_core::walks::sample_walks;

use super::{ConfigArg, TrainFlags};

/// Relative error above which the check fails.
const THRESHOLD: f64 = 1e-4;

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Nodes of the random test graph
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability of the test graph
    #[arg(long)]
    p: Option<f64>,
    /// Width of the uniform noise features
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Central-difference step
    #[arg(long)]
    eps: Option<f64>,
    /// Coordinates probed per parameter tensor
    #[arg(long)]
    coords: Option<usize>,
    #[command(flatten)]
    train: TrainFlags,
}

/// Prints per-tensor errors; fails when any exceeds the threshold.
pub fn run(a: GradcheckArgs) -> Result<()> {
    let mut c = a.config.load()?;
    a.train.apply(&mut c);
    c.set("n", a.n);
    c.set("p", a.p);
    c.set("feature_dim", a.feature_dim);
    c.set("eps", a.eps);
    c.set("coords", a.coords);
    for (key, value) in [
        ("pattern_dim", "8"),
        ("hidden_dim", "16"),
        ("output_dim", "8"),
        ("batch_size", "32"),
        ("gamma", "20"),
    ] {
        c.default_to(key, value);
    }
    let cfg = c.train_config()?;
    let n = c.get_or("n", 30usize)?;
    let p = c.get_or("p", 0.2)?;
    let dim = c.get_or("feature_dim", 8usize)?;
    let eps = c.get_or("eps", 1e-4)?;
    let coords = c.get_or("coords", 100usize)?;

    let g = generate_er(n, p, cfg.seed, FeatureInit::Noise(dim))?;
    let corpus = sample_walks(&g, &AliasSampler::uniform(&g), cfg.walk_params(), cfg.seed)?;
    let (report, names) = objective_gradcheck(&g, &corpus, &cfg, eps, coords)?;
    for (name, t) in names.iter().zip(&report.per_tensor) {
        println!("{name:<16} coords {:>4}  max rel error {:.3e}", t.coords_checked, t.max_rel_error);
    }
    println!("max relative error {:.3e}", report.max_rel_error);
    if !(report.max_rel_error < THRESHOLD) {
        bail!("gradient check failed: max relative error {:.3e} >= {THRESHOLD:e}", report.max_rel_error);
    }
    Ok(())
}
