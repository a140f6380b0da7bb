//! Downstream evaluation: node classification, link prediction, PCA
//! projection and the triad-circle experiment.

mod classify;
mod linkpred;
mod metrics;
mod pca;
mod triad;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

pub use classify::{classify, ClassifyOptions, SoftmaxRegression};
pub use linkpred::{link_prediction_eval, pair_scores, split_edges, EdgeSplit};
pub use metrics::{auc, f1_scores, recall_at, recall_at_positives};
pub use pca::pca_2d;
pub use triad::{triad_separability, TriadOutcome, TRIAD_REPEATS};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    /// One value per repeat, in seed order.
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single repeat.
    pub std: f64,
}

impl MetricSummary {
    fn new(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MetricSummary { values, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: String,
    pub metrics: BTreeMap<String, MetricSummary>,
    pub num_repeats: usize,
    pub seeds: Vec<u64>,
}

impl EvalReport {
    /// `runs[i]` holds the metrics of the repeat seeded with `seeds[i]`.
    pub fn from_runs(task: &str, seeds: Vec<u64>, runs: Vec<Vec<(&str, f64)>>) -> Result<Self> {
        if runs.is_empty() || runs.len() != seeds.len() {
            return Err(Error::invalid("report needs one run per seed"));
        }
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for run in &runs {
            for &(name, v) in run {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
                }
                values.entry(name.to_string()).or_default().push(v);
            }
        }
        if values.values().any(|v| v.len() != runs.len()) {
            return Err(Error::invalid("every run must report the same metrics"));
        }
        Ok(EvalReport {
            task: task.to_string(),
            metrics: values.into_iter().map(|(k, v)| (k, MetricSummary::new(v))).collect(),
            num_repeats: runs.len(),
            seeds,
        })
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|m| m.mean)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "task,metric,mean,std,repeats")?;
        for (name, m) in &self.metrics {
            writeln!(out, "{},{},{},{},{}", self.task, name, m.mean, m.std, self.num_repeats)?;
        }
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = format!("{} ({} repeats)\n", self.task, self.num_repeats);
        let _ = writeln!(s, "{:<16} {:>8} {:>8}", "metric", "mean", "std");
        for (name, m) in &self.metrics {
            let _ = writeln!(s, "{:<16} {:>8.4} {:>8.4}", name, m.mean, m.std);
        }
        s
    }
}
