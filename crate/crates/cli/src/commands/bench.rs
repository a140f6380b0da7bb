use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use clap::Args;
use gralsp_core::graph::{generate_er, AliasSampler, FeatureInit};
use gralsp_core::train;
use gralsp_core::walks::sample_walks;
use log::info;

use super::{ConfigArg, TrainFlags};
use crate::config::{train_entries, write_resolved};
use crate::files::{create, output_dir};

const DEFAULT_SIZES: [usize; 3] = [100, 1_000, 10_000];
const LARGE_SIZE: usize = 100_000;

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Expected degree of every graph
    #[arg(long)]
    np: Option<f64>,
    /// Comma-separated node counts [default: 100,1000,10000]
    #[arg(long, value_name = "LIST")]
    sizes: Option<String>,
    /// Append n = 100000 to the sizes
    #[arg(long)]
    large: bool,
    /// Training iteration budget per graph
    #[arg(long)]
    iters: Option<usize>,
    /// Width of the uniform noise features
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Timed repetitions of walk sampling; the fastest counts
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Output directory
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    let sizes = text
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| anyhow::anyhow!("`sizes`: {e}"))?;
    ensure!(sizes.iter().all(|&n| n >= 2), "`sizes`: every graph needs at least 2 nodes");
    Ok(sizes)
}

/// Writes `scaling.csv` (one row per graph size with raw and log timings)
/// and `scaling_fit.csv` (log-log slope per phase).
pub fn run(a: BenchArgs) -> Result<()> {
    let mut c = a.config.load()?;
    a.train.apply(&mut c);
    c.set("np", a.np);
    c.set("sizes", a.sizes.as_ref());
    c.set("iters", a.iters);
    c.set("feature_dim", a.feature_dim);
    c.set("output", a.output.as_ref().map(|p| p.display()));
    let iters = c.get_or("iters", 100usize)?;
    c.default_to("max_iters", iters);
    let cfg = c.train_config()?;
    let np = c.get_or("np", 6.0)?;
    let dim = c.get_or("feature_dim", 32usize)?;
    let mut sizes = match c.get::<String>("sizes")? {
        Some(s) => parse_sizes(&s)?,
        None => DEFAULT_SIZES.to_vec(),
    };
    if a.large {
        sizes.push(LARGE_SIZE);
    }
    if sizes.len() < 2 {
        bail!("need at least two graph sizes to fit a slope");
    }
    ensure!(a.reps > 0, "--reps must be positive");
    let dir = output_dir(&c.require_path("output")?)?;

    let mut rows = Vec::new();
    for &n in &sizes {
        let g = generate_er(n, np / n as f64, cfg.seed, FeatureInit::Noise(dim))?;
        let mut best = f64::INFINITY;
        let mut corpus = None;
        for _ in 0..a.reps {
            let start = Instant::now();
            let sampler = AliasSampler::uniform(&g);
            let built = sample_walks(&g, &sampler, cfg.walk_params(), cfg.seed)?;
            best = best.min(start.elapsed().as_secs_f64());
            corpus = Some(built);
        }
        let corpus = corpus.expect("at least one repetition");
        let start = Instant::now();
        let out = train(&g, &corpus, &cfg)?;
        let train_secs = start.elapsed().as_secs_f64();
        info!("n {n}: preprocess {best:.4}s, train {train_secs:.3}s over {} iterations", out.history.len());
        rows.push((n, g.num_edges(), best, train_secs, out.history.len()));
    }

    let log_n: Vec<f64> = rows.iter().map(|r| (r.0 as f64).ln()).collect();
    let log_pre: Vec<f64> = rows.iter().map(|r| r.2.ln()).collect();
    let log_train: Vec<f64> = rows.iter().map(|r| r.3.ln()).collect();
    let mut f = create(&dir.join("scaling.csv"))?;
    writeln!(f, "n,edges,preprocess_secs,train_secs,iterations,log_n,log_preprocess,log_train")?;
    for (i, (n, m, pre, tr, it)) in rows.iter().enumerate() {
        writeln!(f, "{n},{m},{pre},{tr},{it},{},{},{}", log_n[i], log_pre[i], log_train[i])?;
    }
    f.flush()?;

    let fits = [("preprocess", fit_line(&log_n, &log_pre)), ("train", fit_line(&log_n, &log_train))];
    let mut f = create(&dir.join("scaling_fit.csv"))?;
    writeln!(f, "phase,slope,intercept")?;
    for (phase, (slope, icept)) in fits {
        writeln!(f, "{phase},{slope},{icept}")?;
        println!("{phase:<10} log-log slope {slope:.3}");
    }
    f.flush()?;

    let size_list: Vec<String> = sizes.iter().map(usize::to_string).collect();
    let mut entries = vec![
        ("np", np.to_string()),
        ("sizes", size_list.join(",")),
        ("iters", iters.to_string()),
        ("feature_dim", dim.to_string()),
    ];
    entries.extend(train_entries(&cfg));
    write_resolved(&dir, "bench-scaling", &entries)?;
    Ok(())
}
