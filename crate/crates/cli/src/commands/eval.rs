use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use gralsp_core::eval::{classify, link_prediction_eval, pca_2d, ClassifyOptions};
use gralsp_core::{train_graph, EvalReport};

use super::{ConfigArg, GraphFlags, TrainFlags};
use crate::config::{train_entries, write_resolved};
use crate::files::{create, output_dir, read_embeddings, read_graph, read_labels_for};

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Embedding file written by `train`
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Node labels, `<id> <label>` per line
    #[arg(long, value_name = "FILE")]
    labels: Option<PathBuf>,
    /// Share of each class held out for testing
    #[arg(long)]
    test_frac: Option<f64>,
    /// Independent train/test splits
    #[arg(long)]
    repeats: Option<usize>,
    /// Random seed for the splits
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for eval-classify.csv and the resolved settings
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LinkpredArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    graph: GraphFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Share of edges held out as positives
    #[arg(long)]
    frac: Option<f64>,
    /// Directory for eval-linkpred.csv and the resolved settings
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Embedding file written by `train`
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Node labels copied into the output [default: empty label column]
    #[arg(long, value_name = "FILE")]
    labels: Option<PathBuf>,
    /// Directory for pca.csv and the resolved settings
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
}

fn report(name: &str, r: &EvalReport, output: Option<PathBuf>, entries: &[(&str, String)]) -> Result<()> {
    print!("{}", r.table());
    if let Some(dir) = output {
        let dir = output_dir(&dir)?;
        let mut f = create(&dir.join(format!("{name}.csv")))?;
        r.write_csv(&mut f)?;
        f.flush()?;
        write_resolved(&dir, name, entries)?;
    }
    Ok(())
}

pub fn run_classify(a: ClassifyArgs) -> Result<()> {
    let mut c = a.config.load()?;
    c.set("embeddings", a.embeddings.as_ref().map(|p| p.display()));
    c.set("labels", a.labels.as_ref().map(|p| p.display()));
    c.set("test_frac", a.test_frac);
    c.set("repeats", a.repeats);
    c.set("seed", a.seed);
    c.set("output", a.output.as_ref().map(|p| p.display()));
    let d = ClassifyOptions::default();
    let opts = ClassifyOptions {
        test_frac: c.get_or("test_frac", d.test_frac)?,
        repeats: c.get_or("repeats", d.repeats)?,
        seed: c.get_or("seed", d.seed)?,
        ..d
    };
    let emb_path = c.require_path("embeddings")?;
    let labels_path = c.require_path("labels")?;
    let (ids, emb) = read_embeddings(&emb_path)?;
    let labels = read_labels_for(&labels_path, &ids)?;
    let r = classify(&emb, &labels, &opts)?;
    let entries = [
        ("embeddings", emb_path.display().to_string()),
        ("labels", labels_path.display().to_string()),
        ("test_frac", opts.test_frac.to_string()),
        ("repeats", opts.repeats.to_string()),
        ("seed", opts.seed.to_string()),
    ];
    report("eval-classify", &r, c.path("output"), &entries)
}

pub fn run_linkpred(a: LinkpredArgs) -> Result<()> {
    let mut c = a.config.load()?;
    a.graph.apply(&mut c);
    a.train.apply(&mut c);
    c.set("frac", a.frac);
    c.set("output", a.output.as_ref().map(|p| p.display()));
    let cfg = c.train_config()?;
    let frac = c.get_or("frac", 0.1)?;
    let edges = c.require_path("edges")?;
    let features = c.path("features");
    let g = read_graph(&edges, features.as_deref(), None)?;
    let r = link_prediction_eval(&g, |reduced| Ok(train_graph(reduced, &cfg)?.embeddings), frac, cfg.seed)?;
    let mut entries = vec![("edges", edges.display().to_string())];
    entries.extend(features.map(|f| ("features", f.display().to_string())));
    entries.push(("frac", frac.to_string()));
    entries.extend(train_entries(&cfg));
    report("eval-linkpred", &r, c.path("output"), &entries)
}

/// Writes `pca.csv` with header `node_id,x,y,label`.
pub fn run_project(a: ProjectArgs) -> Result<()> {
    let mut c = a.config.load()?;
    c.set("embeddings", a.embeddings.as_ref().map(|p| p.display()));
    c.set("labels", a.labels.as_ref().map(|p| p.display()));
    c.set("output", a.output.as_ref().map(|p| p.display()));
    let emb_path = c.require_path("embeddings")?;
    let labels_path = c.path("labels");
    let dir = output_dir(&c.require_path("output")?)?;
    let (ids, emb) = read_embeddings(&emb_path)?;
    let labels = labels_path.as_deref().map(|p| read_labels_for(p, &ids)).transpose()?;
    let xy = pca_2d(&emb)?;

    let mut f = create(&dir.join("pca.csv"))?;
    writeln!(f, "node_id,x,y,label")?;
    for (v, id) in ids.iter().enumerate() {
        let label = labels
            .as_ref()
            .and_then(|l| l.get(v).map(|k| l.classes()[k].as_str()))
            .unwrap_or("");
        writeln!(f, "{id},{},{},{label}", xy.get(v, 0), xy.get(v, 1))?;
    }
    f.flush()?;
    let mut entries = vec![("embeddings", emb_path.display().to_string())];
    entries.extend(labels_path.map(|p| ("labels", p.display().to_string())));
    write_resolved(&dir, "project", &entries)?;
    println!("{} points projected to {}", ids.len(), dir.join("pca.csv").display());
    Ok(())
}
