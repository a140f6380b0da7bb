use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gralsp_core::graph::load_graph;
use gralsp_core::{Graph, Labels, Tensor};
use log::info;

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn output_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).with_context(|| format!("cannot create directory {}", path.display()))?;
    Ok(path.to_path_buf())
}

pub fn read_graph(edges: &Path, features: Option<&Path>, labels: Option<&Path>) -> Result<Graph> {
    let loaded = load_graph(
        open(edges)?,
        features.map(open).transpose()?,
        labels.map(open).transpose()?,
    )
    .with_context(|| format!("loading {}", edges.display()))?;
    info!(
        "loaded {} nodes, {} edges ({} self-loops and {} duplicates dropped)",
        loaded.graph.num_nodes(),
        loaded.graph.num_edges(),
        loaded.self_loops_dropped,
        loaded.duplicate_edges
    );
    Ok(loaded.graph)
}

/// Header `rows cols`, then `<id> <v1> ... <vcols>` per row.
pub fn write_embeddings(path: &Path, ids: &[String], emb: &Tensor) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{} {}", emb.rows(), emb.cols())?;
    for (r, id) in ids.iter().enumerate() {
        write!(out, "{id}")?;
        for x in emb.row(r) {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, Tensor)> {
    let ctx = |line: usize| format!("{} line {line}", path.display());
    let mut lines = open(path)?.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .with_context(|| ctx(1))?;
    let [rows, cols] = dims[..] else {
        bail!("{}: header must be `<rows> <dim>`", ctx(1));
    };
    let mut ids = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id = toks.next().unwrap_or_default().to_string();
        let before = data.len();
        for t in toks {
            data.push(t.parse::<f64>().with_context(|| ctx(i + 1))?);
        }
        if data.len() - before != cols {
            bail!("{}: expected {cols} values, found {}", ctx(i + 1), data.len() - before);
        }
        ids.push(id);
    }
    if ids.len() != rows {
        bail!("{}: header announces {rows} rows, found {}", path.display(), ids.len());
    }
    Ok((ids, Tensor::new(rows, cols, data)?))
}

/// Labels file aligned to `ids`; nodes without a line stay unlabeled.
pub fn read_labels_for(path: &Path, ids: &[String]) -> Result<Labels> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut rows = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let [id, class] = toks[..] else {
            bail!("{} line {}: expected `<id> <label>`", path.display(), i + 1);
        };
        let v = *index
            .get(id)
            .ok_or_else(|| anyhow!("{} line {}: no embedding for node `{id}`", path.display(), i + 1))?;
        rows.push((v, class.to_string()));
    }
    let classes: Vec<String> = rows.iter().map(|(_, c)| c.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut assignment = vec![None; ids.len()];
    for (v, c) in rows {
        if assignment[v].is_some() {
            bail!("{}: node `{}` labeled twice", path.display(), ids[v]);
        }
        assignment[v] = Some(classes.binary_search(&c).expect("collected above"));
    }
    Ok(Labels::new(classes, assignment)?)
}
