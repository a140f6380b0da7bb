use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gralsp_core::graph::AliasSampler;
use gralsp_core::walks::sample_walks;
use gralsp_core::TrainConfig;

use super::{ConfigArg, GraphFlags, WalkFlags};
use crate::config::write_resolved;
use crate::files::{create, output_dir, read_graph};

#[derive(Args, Debug)]
pub struct WalksArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    graph: GraphFlags,
    #[command(flatten)]
    walk: WalkFlags,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Also write every sampled walk to walks.txt
    #[arg(long)]
    dump_walks: bool,
}

/// Writes `node_dist.txt` (`<id> <pattern>:<p> ...`, one row per node with
/// walks), `patterns.csv` (steps, receptive radius and graph-level
/// probability of every observed pattern) and the resolved settings.
pub fn run(a: WalksArgs) -> Result<()> {
    let mut c = a.config.load()?;
    a.graph.apply(&mut c);
    a.walk.apply(&mut c);
    c.set("seed", a.seed);
    c.set("output", a.output.as_ref().map(|p| p.display()));
    let d = TrainConfig::default();
    let gamma = c.get_or("gamma", d.walks_per_node)?;
    let l = c.get_or("l", d.walk_length)?;
    let seed = c.get_or("seed", 0u64)?;
    let edges = c.require_path("edges")?;
    let features = c.path("features");
    let dir = output_dir(&c.require_path("output")?)?;

    let g = read_graph(&edges, features.as_deref(), None)?;
    let params = TrainConfig {
        walks_per_node: gamma,
        walk_length: l,
        ..d
    }
    .walk_params();
    let corpus = sample_walks(&g, &AliasSampler::uniform(&g), params, seed)?;

    let mut out = create(&dir.join("node_dist.txt"))?;
    for v in (0..g.num_nodes()).filter(|&v| g.degree(v) > 0) {
        write!(out, "{}", g.id(v))?;
        for (p, prob) in corpus.node_dist(v) {
            write!(out, " {p}:{prob}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;

    let mut out = create(&dir.join("patterns.csv"))?;
    writeln!(out, "pattern_id,steps,receptive_radius,graph_prob")?;
    for (p, prob) in corpus.registry().patterns().iter().zip(corpus.graph_dist()) {
        let steps: Vec<String> = p.steps.iter().map(u8::to_string).collect();
        writeln!(out, "{},{},{},{prob}", p.id, steps.join("-"), p.receptive_radius)?;
    }
    out.flush()?;

    if a.dump_walks {
        let mut out = create(&dir.join("walks.txt"))?;
        corpus.write_dump(&g, &mut out)?;
        out.flush()?;
    }

    let mut entries = vec![("edges", edges.display().to_string())];
    entries.extend(features.map(|f| ("features", f.display().to_string())));
    entries.extend([("gamma", gamma.to_string()), ("l", l.to_string()), ("seed", seed.to_string())]);
    write_resolved(&dir, "walks", &entries)?;
    println!(
        "{} walks over {} nodes, {} distinct patterns",
        corpus.num_walks(),
        corpus.active_nodes(),
        corpus.registry().len()
    );
    Ok(())
}
