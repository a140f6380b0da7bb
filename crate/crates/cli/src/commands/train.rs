use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gralsp_core::model::write_checkpoint;
use gralsp_core::train::{moving_average, write_history};
use gralsp_core::train_graph;

use super::{ConfigArg, GraphFlags, TrainFlags};
use crate::config::{train_entries, write_resolved};
use crate::files::{create, output_dir, read_graph, write_embeddings};

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    graph: GraphFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Output directory
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
}

/// Writes `embeddings.txt`, `history.csv`, `model.ckpt` and the resolved
/// settings.
pub fn run(a: TrainArgs) -> Result<()> {
    let mut c = a.config.load()?;
    a.graph.apply(&mut c);
    a.train.apply(&mut c);
    c.set("output", a.output.as_ref().map(|p| p.display()));
    let cfg = c.train_config()?;
    let edges = c.require_path("edges")?;
    let features = c.path("features");
    let dir = output_dir(&c.require_path("output")?)?;

    let g = read_graph(&edges, features.as_deref(), None)?;
    let out = train_graph(&g, &cfg)?;

    write_embeddings(&dir.join("embeddings.txt"), g.ids(), &out.embeddings)?;
    let mut f = create(&dir.join("history.csv"))?;
    write_history(&out.history, &mut f)?;
    f.flush()?;
    let mut f = create(&dir.join("model.ckpt"))?;
    write_checkpoint(&out.params, &mut f)?;
    f.flush()?;

    let mut entries = vec![("edges", edges.display().to_string())];
    entries.extend(features.map(|f| ("features", f.display().to_string())));
    entries.extend(train_entries(&cfg));
    write_resolved(&dir, "train", &entries)?;

    let ma = moving_average(&out.history);
    println!(
        "{} iterations ({}), moving-average loss {} -> {}",
        out.history.len(),
        if out.converged { "converged" } else { "iteration cap reached" },
        ma.first().map_or("n/a".into(), |x| format!("{x:.6}")),
        ma.last().map_or("n/a".into(), |x| format!("{x:.6}")),
    );
    Ok(())
}
