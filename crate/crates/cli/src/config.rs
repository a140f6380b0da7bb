use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use gralsp_core::model::{Aggregation, MeanMode};
use gralsp_core::train::NodeLossForm;
use gralsp_core::TrainConfig;

/// Every key a config file may set. Flags use the same names with dashes.
pub const KNOWN_KEYS: &[&str] = &[
    // paths
    "edges",
    "features",
    "labels",
    "embeddings",
    "output",
    // training
    "gamma",
    "l",
    "window",
    "neg_k",
    "walks_per_layer",
    "mu",
    "pattern_dim",
    "hidden_dim",
    "output_dim",
    "layers",
    "lr",
    "batch_size",
    "triples_per_node",
    "max_iters",
    "patience",
    "seed",
    "aggregation",
    "mean",
    "include_source",
    "loss_form",
    "withhold_triples",
    // evaluation
    "test_frac",
    "repeats",
    "frac",
    // synthesis and benchmarking
    "n",
    "p",
    "np",
    "feature_dim",
    "block_size",
    "blocks",
    "p_in",
    "p_out",
    "sizes",
    "iters",
    // gradient check
    "eps",
    "coords",
];

/// Settings merged from an optional `key = value` file and command-line
/// flags; flags win.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                bail!("line {}: unknown key `{key}`", i + 1);
            }
            if value.is_empty() {
                bail!("line {}: key `{key}` has no value", i + 1);
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                bail!("line {}: key `{key}` set twice", i + 1);
            }
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                RunConfig::parse(&text).with_context(|| format!("config {}", p.display()))
            }
        }
    }

    /// Overrides `key` when the flag was given.
    pub fn set<T: Display>(&mut self, key: &str, value: Option<T>) {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    /// Sets `key` unless the file or a flag already did.
    pub fn default_to<T: Display>(&mut self, key: &str, value: T) {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        self.values.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("`{key}`: cannot parse `{v}`: {e}")))
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| anyhow!("missing required setting `{key}`"))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| anyhow!("missing required path `--{key}`"))
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            walks_per_node: self.get_or("gamma", d.walks_per_node)?,
            walk_length: self.get_or("l", d.walk_length)?,
            window: self.get_or("window", d.window)?,
            neg_k: self.get_or("neg_k", d.neg_k)?,
            walks_per_layer: self.get_or("walks_per_layer", d.walks_per_layer)?,
            mu: self.get_or("mu", d.mu)?,
            pattern_dim: self.get_or("pattern_dim", d.pattern_dim)?,
            hidden_dim: self.get_or("hidden_dim", d.hidden_dim)?,
            output_dim: self.get_or("output_dim", d.output_dim)?,
            layers: self.get_or("layers", d.layers)?,
            lr: self.get_or("lr", d.lr)?,
            batch_size: self.get_or("batch_size", d.batch_size)?,
            triples_per_node: self.get_or("triples_per_node", d.triples_per_node)?,
            max_iters: self.get_or("max_iters", d.max_iters)?,
            patience: self.get_or("patience", d.patience)?,
            seed: self.get_or("seed", d.seed)?,
            aggregation: match self.values.get("aggregation").map(String::as_str) {
                None | Some("full") => Aggregation::Full,
                Some("plain-mean") => Aggregation::PlainMean,
                Some(other) => bail!("`aggregation`: expected full or plain-mean, got `{other}`"),
            },
            mean: match self.values.get("mean").map(String::as_str) {
                None | Some("flat") => MeanMode::Flat,
                Some("per-walk") => MeanMode::PerWalk,
                Some(other) => bail!("`mean`: expected flat or per-walk, got `{other}`"),
            },
            include_source: self.get_or("include_source", d.include_source)?,
            node_loss_form: match self.values.get("loss_form").map(String::as_str) {
                None | Some("standard") => NodeLossForm::Standard,
                Some("printed") => NodeLossForm::Printed,
                Some(other) => bail!("`loss_form`: expected standard or printed, got `{other}`"),
            },
            withhold_triples: self.get_or("withhold_triples", d.withhold_triples)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `(key, value)` lines describing a training configuration.
pub fn train_entries(c: &TrainConfig) -> Vec<(&'static str, String)> {
    vec![
        ("gamma", c.walks_per_node.to_string()),
        ("l", c.walk_length.to_string()),
        ("window", c.window.to_string()),
        ("neg_k", c.neg_k.to_string()),
        ("walks_per_layer", c.walks_per_layer.to_string()),
        ("mu", c.mu.to_string()),
        ("pattern_dim", c.pattern_dim.to_string()),
        ("hidden_dim", c.hidden_dim.to_string()),
        ("output_dim", c.output_dim.to_string()),
        ("layers", c.layers.to_string()),
        ("lr", c.lr.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("triples_per_node", c.triples_per_node.to_string()),
        ("max_iters", c.max_iters.to_string()),
        ("patience", c.patience.to_string()),
        ("seed", c.seed.to_string()),
        (
            "aggregation",
            match c.aggregation {
                Aggregation::Full => "full",
                Aggregation::PlainMean => "plain-mean",
            }
            .into(),
        ),
        (
            "mean",
            match c.mean {
                MeanMode::Flat => "flat",
                MeanMode::PerWalk => "per-walk",
            }
            .into(),
        ),
        ("include_source", c.include_source.to_string()),
        (
            "loss_form",
            match c.node_loss_form {
                NodeLossForm::Standard => "standard",
                NodeLossForm::Printed => "printed",
            }
            .into(),
        ),
        ("withhold_triples", c.withhold_triples.to_string()),
    ]
}

/// Writes the settings a command actually used, in config-file syntax, to
/// `dir/<command>.conf`.
pub fn write_resolved(dir: &Path, command: &str, entries: &[(&str, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        debug_assert!(KNOWN_KEYS.contains(k), "{k}");
        text.push_str(&format!("{k} = {v}\n"));
    }
    let path = dir.join(format!("{command}.conf"));
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let c = RunConfig::parse("# run\ngamma = 20\n\nmu=0.5\naggregation = plain-mean\n").unwrap();
        let t = c.train_config().unwrap();
        assert_eq!(t.walks_per_node, 20);
        assert_eq!(t.mu, 0.5);
        assert_eq!(t.aggregation, Aggregation::PlainMean);
        assert_eq!(t.window, TrainConfig::default().window);

        assert!(RunConfig::parse("gama = 3").is_err());
        assert!(RunConfig::parse("gamma 3").is_err());
        assert!(RunConfig::parse("gamma = 3\ngamma = 4").is_err());
        assert!(RunConfig::parse("gamma =").is_err());
        assert!(RunConfig::parse("gamma = x").unwrap().train_config().is_err());
        assert!(RunConfig::parse("gamma = 0").unwrap().train_config().is_err());
        assert!(RunConfig::parse("mean = median").unwrap().train_config().is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut c = RunConfig::parse("seed = 3\nlr = 0.1").unwrap();
        c.set("seed", Some(7u64));
        c.set::<f64>("lr", None);
        let t = c.train_config().unwrap();
        assert_eq!((t.seed, t.lr), (7, 0.1));
    }

    #[test]
    fn resolved_entries_round_trip() {
        let t = TrainConfig {
            mu: 0.25,
            seed: 11,
            mean: MeanMode::PerWalk,
            node_loss_form: NodeLossForm::Printed,
            ..TrainConfig::default()
        };
        let text: String = train_entries(&t).iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(RunConfig::parse(&text).unwrap().train_config().unwrap(), t);
    }
}
