use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use log::warn;

use super::{Features, Graph, Labels, NodeId, MAX_IDENTITY_NODES};
use crate::error::{Error, Result};

/// A parsed graph plus what was discarded while building it.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
}

/// Non-comment lines with their 1-based line numbers.
fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Err(e) => Some(Err(Error::Io(e))),
            Ok(l) => {
                let t = l.trim();
                if t.is_empty() || t.starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, t.to_string())))
                }
            }
        })
}

/// Reads an edge list plus optional feature and label files.
///
/// Node ids are assigned in order of first appearance in the edge list.
/// Without a feature file, nodes get one-hot identity features (refused above
/// [`MAX_IDENTITY_NODES`]).
pub fn load_graph<E, F, L>(edges: E, features: Option<F>, labels: Option<L>) -> Result<LoadedGraph>
where
    E: BufRead,
    F: BufRead,
    L: BufRead,
{
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut intern = |tok: &str, ids: &mut Vec<String>| -> NodeId {
        *index.entry(tok.to_string()).or_insert_with(|| {
            ids.push(tok.to_string());
            ids.len() - 1
        })
    };
    let mut pairs = Vec::new();
    for line in content_lines(edges) {
        let (no, text) = line?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                source_name: "edges",
                line: no,
                message: format!("expected 2 node identifiers, found {}", toks.len()),
            });
        }
        let u = intern(toks[0], &mut ids);
        let v = intern(toks[1], &mut ids);
        pairs.push((u, v));
    }
    let (graph, self_loops) = Graph::with_ids(ids, &pairs)?;
    if graph.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    if self_loops > 0 {
        warn!("dropped {self_loops} self-loop(s)");
    }
    let duplicate_edges = pairs.len() - self_loops - graph.num_edges();
    let n = graph.num_nodes();

    let features = match features {
        Some(reader) => read_features(reader, &graph)?,
        None if n <= MAX_IDENTITY_NODES => Features::Identity(n),
        None => {
            return Err(Error::invalid(format!(
                "graph has {n} nodes; identity features are limited to {MAX_IDENTITY_NODES}, supply a feature file"
            )))
        }
    };
    let mut graph = graph.with_features(features)?;
    if let Some(reader) = labels {
        let labels = read_labels(reader, &graph)?;
        graph = graph.with_labels(labels)?;
    }
    Ok(LoadedGraph {
        graph,
        self_loops_dropped: self_loops,
        duplicate_edges,
    })
}

fn read_features<R: BufRead>(reader: R, graph: &Graph) -> Result<Features> {
    let n = graph.num_nodes();
    let mut dim = None;
    let mut data = Vec::new();
    let mut seen = vec![false; n];
    for line in content_lines(reader) {
        let (no, text) = line?;
        let mut toks = text.split_whitespace();
        let id = toks.next().unwrap_or_default();
        let values = toks
            .map(|t| match t.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(Error::Parse {
                    source_name: "features",
                    line: no,
                    message: format!("`{t}` is not a finite number"),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = *dim.get_or_insert(values.len());
        if d == 0 {
            return Err(Error::Parse {
                source_name: "features",
                line: no,
                message: "feature row has no values".into(),
            });
        }
        if values.len() != d {
            return Err(Error::FeatureLength {
                node: id.to_string(),
                expected: d,
                found: values.len(),
            });
        }
        let v = graph.node_index(id).ok_or_else(|| Error::UnknownNode {
            kind: "features",
            line: no,
            node: id.to_string(),
        })?;
        if seen[v] {
            return Err(Error::Parse {
                source_name: "features",
                line: no,
                message: format!("duplicate feature row for `{id}`"),
            });
        }
        seen[v] = true;
        if data.is_empty() {
            data = vec![0.0; n * d];
        }
        data[v * d..(v + 1) * d].copy_from_slice(&values);
    }
    let dim = dim.ok_or_else(|| Error::invalid("feature file is empty"))?;
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!("no feature row for node `{}`", graph.id(v))));
    }
    Features::dense(dim, data)
}

fn read_labels<R: BufRead>(reader: R, graph: &Graph) -> Result<Labels> {
    let mut rows = Vec::new();
    for line in content_lines(reader) {
        let (no, text) = line?;
        let toks: Vec<&str> = text.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                source_name: "labels",
                line: no,
                message: format!("expected `<id> <label>`, found {} tokens", toks.len()),
            });
        }
        let v = graph.node_index(toks[0]).ok_or_else(|| Error::UnknownNode {
            kind: "labels",
            line: no,
            node: toks[0].to_string(),
        })?;
        rows.push((v, toks[1].to_string()));
    }
    let classes: Vec<String> = rows
        .iter()
        .map(|(_, c)| c.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut assignment = vec![None; graph.num_nodes()];
    for (v, c) in rows {
        assignment[v] = Some(classes.binary_search(&c).expect("class collected above"));
    }
    Labels::new(classes, assignment)
}

/// Canonical edge list: one `u v` line per edge, sorted by contiguous id.
pub fn write_edge_list<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    for (u, v) in graph.edges() {
        writeln!(out, "{} {}", graph.id(u), graph.id(v))?;
    }
    Ok(())
}

pub fn write_features<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    let Some(features) = graph.features() else {
        return Ok(());
    };
    let mut row = vec![0.0; features.dim()];
    for v in 0..graph.num_nodes() {
        features.copy_row(v, &mut row);
        write!(out, "{}", graph.id(v))?;
        for x in &row {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_labels<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    let Some(labels) = graph.labels() else {
        return Ok(());
    };
    for (v, c) in labels.labeled() {
        writeln!(out, "{} {}", graph.id(v), labels.classes()[c])?;
    }
    Ok(())
}
