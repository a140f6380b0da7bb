use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use gralsp_core::graph::{
    generate_er, generate_planted_partition, generate_triad_circle, write_edge_list, FeatureInit,
};
use gralsp_core::Graph;
use log::warn;

use super::ConfigArg;
use crate::config::{write_resolved, RunConfig};
use crate::files::{create, output_dir};

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(subcommand)]
    kind: Kind,
}

#[derive(Subcommand, Debug)]
enum Kind {
    /// Erdős–Rényi G(n, p)
    Er(ErArgs),
    /// Equal-sized Erdős–Rényi blocks with sparse links between them
    Planted(PlantedArgs),
    /// Circle whose nodes alternate between closed and open triads
    TriadCircle(TriadArgs),
}

#[derive(Args, Debug)]
struct Output {
    #[command(flatten)]
    config: ConfigArg,
    /// Output directory
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ErArgs {
    #[command(flatten)]
    out: Output,
    /// Number of nodes
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability
    #[arg(long, conflicts_with = "np")]
    p: Option<f64>,
    /// Expected degree; sets p = np / n
    #[arg(long)]
    np: Option<f64>,
    /// Uniform noise features of this width instead of identity
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PlantedArgs {
    #[command(flatten)]
    out: Output,
    /// Nodes per block
    #[arg(long)]
    block_size: Option<usize>,
    /// Number of blocks
    #[arg(long)]
    blocks: Option<usize>,
    /// Edge probability inside a block
    #[arg(long)]
    p_in: Option<f64>,
    /// Edge probability across blocks
    #[arg(long)]
    p_out: Option<f64>,
    /// Uniform noise features of this width instead of identity
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Random seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TriadArgs {
    #[command(flatten)]
    out: Output,
    /// Circle nodes (even)
    #[arg(long)]
    n: Option<usize>,
}

fn features(dim: Option<usize>) -> FeatureInit {
    match dim {
        Some(d) => FeatureInit::Noise(d),
        None => FeatureInit::Identity,
    }
}

/// Edge list plus feature and label rows of nodes that appear in it;
/// isolated nodes cannot be expressed in an edge list and are dropped.
fn write_graph(dir: &Path, g: &Graph, with_features: bool) -> Result<()> {
    let isolated = (0..g.num_nodes()).filter(|&v| g.degree(v) == 0).count();
    if isolated > 0 {
        warn!("{isolated} isolated node(s) left out of the written graph");
    }
    let mut edges = create(&dir.join("edges.txt"))?;
    write_edge_list(g, &mut edges)?;
    edges.flush()?;
    if with_features {
        if let Some(f) = g.features() {
            let mut out = create(&dir.join("features.txt"))?;
            let mut row = vec![0.0; f.dim()];
            for v in (0..g.num_nodes()).filter(|&v| g.degree(v) > 0) {
                f.copy_row(v, &mut row);
                write!(out, "{}", g.id(v))?;
                for x in &row {
                    write!(out, " {x}")?;
                }
                writeln!(out)?;
            }
            out.flush()?;
        }
    }
    if let Some(labels) = g.labels() {
        let mut out = create(&dir.join("labels.txt"))?;
        for (v, c) in labels.labeled().filter(|&(v, _)| g.degree(v) > 0) {
            writeln!(out, "{} {}", g.id(v), labels.classes()[c])?;
        }
        out.flush()?;
    }
    Ok(())
}

fn finish(c: &RunConfig, g: &Graph, with_features: bool, entries: Vec<(&str, String)>) -> Result<()> {
    let dir = output_dir(&c.require_path("output")?)?;
    write_graph(&dir, g, with_features)?;
    write_resolved(&dir, "synth", &entries)?;
    println!("{} nodes, {} edges written to {}", g.num_nodes(), g.num_edges(), dir.display());
    Ok(())
}

pub fn run(args: SynthArgs) -> Result<()> {
    match args.kind {
        Kind::Er(a) => {
            let mut c = a.out.config.load()?;
            c.set("output", a.out.output.as_ref().map(|p| p.display()));
            c.set("n", a.n);
            c.set("p", a.p);
            c.set("np", a.np);
            c.set("feature_dim", a.feature_dim);
            c.set("seed", a.seed);
            let n: usize = c.require("n")?;
            let p = match (c.get::<f64>("p")?, c.get::<f64>("np")?) {
                (Some(_), Some(_)) => bail!("set only one of `p` and `np`"),
                (Some(p), None) => p,
                (None, Some(np)) => np / n as f64,
                (None, None) => bail!("missing required setting `p` or `np`"),
            };
            let seed = c.get_or("seed", 0u64)?;
            let dim = c.get::<usize>("feature_dim")?;
            let g = generate_er(n, p, seed, features(dim))?;
            let mut entries = vec![("n", n.to_string()), ("p", p.to_string()), ("seed", seed.to_string())];
            entries.extend(dim.map(|d| ("feature_dim", d.to_string())));
            finish(&c, &g, dim.is_some(), entries)
        }
        Kind::Planted(a) => {
            let mut c = a.out.config.load()?;
            c.set("output", a.out.output.as_ref().map(|p| p.display()));
            c.set("block_size", a.block_size);
            c.set("blocks", a.blocks);
            c.set("p_in", a.p_in);
            c.set("p_out", a.p_out);
            c.set("feature_dim", a.feature_dim);
            c.set("seed", a.seed);
            let size = c.get_or("block_size", 100usize)?;
            let blocks = c.get_or("blocks", 2usize)?;
            let p_in = c.get_or("p_in", 0.1)?;
            let p_out = c.get_or("p_out", 0.005)?;
            let seed = c.get_or("seed", 0u64)?;
            let dim = c.get::<usize>("feature_dim")?;
            let g = generate_planted_partition(&vec![size; blocks], p_in, p_out, seed, features(dim))?;
            let mut entries = vec![
                ("block_size", size.to_string()),
                ("blocks", blocks.to_string()),
                ("p_in", p_in.to_string()),
                ("p_out", p_out.to_string()),
                ("seed", seed.to_string()),
            ];
            entries.extend(dim.map(|d| ("feature_dim", d.to_string())));
            finish(&c, &g, dim.is_some(), entries)
        }
        Kind::TriadCircle(a) => {
            let mut c = a.out.config.load()?;
            c.set("output", a.out.output.as_ref().map(|p| p.display()));
            c.set("n", a.n);
            let n = c.get_or("n", 100usize)?;
            let g = generate_triad_circle(n)?;
            finish(&c, &g, true, vec![("n", n.to_string())])
        }
    }
}
