//! Plain-text parameter dump. Values are written in shortest round-trip
//! form, so a reloaded model reproduces embeddings bit for bit.

use std::io::{BufRead, Write};

use super::{Aggregation, LayerParams, MeanMode, ModelConfig, ModelParams};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::walks::PatternRegistry;

const MAGIC: &str = "gralsp-checkpoint 1";

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let c = &params.config;
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "config {} {} {} {} {} {} {} {} {}",
        c.input_dim,
        c.hidden_dim,
        c.output_dim,
        c.layers,
        c.pattern_dim,
        c.walks_per_layer,
        match c.aggregation {
            Aggregation::Full => "full",
            Aggregation::PlainMean => "plain-mean",
        },
        match c.mean {
            MeanMode::Flat => "flat",
            MeanMode::PerWalk => "per-walk",
        },
        c.include_source
    )?;
    writeln!(out, "patterns {}", params.registry.len())?;
    for p in params.registry.patterns() {
        let steps: Vec<String> = p.steps.iter().map(u8::to_string).collect();
        writeln!(out, "{}", steps.join(" "))?;
    }
    for (name, t) in params.tensor_names().iter().zip(params.tensors()) {
        writeln!(out, "tensor {name} {} {}", t.rows(), t.cols())?;
        for r in 0..t.rows() {
            let vals: Vec<String> = t.row(r).iter().map(|x| format!("{x:e}")).collect();
            writeln!(out, "{}", vals.join(" "))?;
        }
    }
    writeln!(out, "end")?;
    Ok(())
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(bad(self.line, "unexpected end of file")),
        }
    }

    fn header(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self.next()?;
        let mut toks = l.split_whitespace().map(str::to_string);
        if toks.next().as_deref() != Some(key) {
            return Err(bad(self.line, format!("expected `{key}`")));
        }
        Ok(toks.collect())
    }

    fn parse<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| bad(self.line, format!("cannot parse `{tok}`")))
    }
}

pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<ModelParams> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
    };
    if lines.next()?.trim() != MAGIC {
        return Err(bad(1, "not a checkpoint file"));
    }
    let c = lines.header("config")?;
    if c.len() != 9 {
        return Err(bad(lines.line, "config needs 9 fields"));
    }
    let config = ModelConfig {
        input_dim: lines.parse(&c[0])?,
        hidden_dim: lines.parse(&c[1])?,
        output_dim: lines.parse(&c[2])?,
        layers: lines.parse(&c[3])?,
        pattern_dim: lines.parse(&c[4])?,
        walks_per_layer: lines.parse(&c[5])?,
        aggregation: match c[6].as_str() {
            "full" => Aggregation::Full,
            "plain-mean" => Aggregation::PlainMean,
            other => return Err(bad(lines.line, format!("unknown aggregation `{other}`"))),
        },
        mean: match c[7].as_str() {
            "flat" => MeanMode::Flat,
            "per-walk" => MeanMode::PerWalk,
            other => return Err(bad(lines.line, format!("unknown mean mode `{other}`"))),
        },
        include_source: lines.parse(&c[8])?,
    };
    config.validate()?;
    let p = lines.header("patterns")?;
    let count: usize = lines.parse(p.first().map_or("", String::as_str))?;
    let mut registry = PatternRegistry::new();
    for _ in 0..count {
        let l = lines.next()?;
        let steps = l
            .split_whitespace()
            .map(|t| lines.parse::<u8>(t))
            .collect::<Result<Vec<u8>>>()?;
        if !crate::walks::is_valid_pattern(&steps) || registry.get(&steps).is_some() {
            return Err(bad(lines.line, "invalid or repeated pattern"));
        }
        registry.register(&steps);
    }

    let dims = config.dims();
    let mut expected = vec![("walk_table".to_string(), count + 1, config.pattern_dim)];
    for k in 1..=config.layers {
        let (din, dout, d) = (dims[k - 1], dims[k], config.pattern_dim);
        expected.extend([
            (format!("U{k}"), dout, din),
            (format!("V{k}"), dout, din),
            (format!("P{k}"), 1, d),
            (format!("b{k}"), 1, 1),
            (format!("Q{k}"), din, d),
            (format!("r{k}"), 1, din),
        ]);
    }
    let mut tensors = Vec::with_capacity(expected.len());
    for (name, rows, cols) in expected {
        let h = lines.header("tensor")?;
        let shape_ok = h.len() == 3
            && h[0] == name
            && lines.parse::<usize>(&h[1])? == rows
            && lines.parse::<usize>(&h[2])? == cols;
        if !shape_ok {
            return Err(bad(lines.line, format!("expected tensor {name} {rows} {cols}")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = lines.next()?;
            let before = data.len();
            for t in l.split_whitespace() {
                data.push(lines.parse::<f64>(t)?);
            }
            if data.len() - before != cols {
                return Err(bad(lines.line, format!("row of {name} needs {cols} values")));
            }
        }
        tensors.push(Tensor::new(rows, cols, data).map_err(|e| bad(lines.line, e))?);
    }
    if lines.next()?.trim() != "end" {
        return Err(bad(lines.line, "expected `end`"));
    }
    let mut it = tensors.into_iter();
    let walk_table = it.next().expect("walk table");
    let mut layers = Vec::with_capacity(config.layers);
    while let Some(u) = it.next() {
        let mut take = || it.next().expect("layer tensors");
        layers.push(LayerParams {
            u,
            v: take(),
            p: take(),
            b: take(),
            q: take(),
            r: take(),
        });
    }
    Ok(ModelParams {
        config,
        walk_table,
        layers,
        registry,
    })
}
