//! Joint objective, minibatch assembly and the optimization loop.

mod adam;
mod loss;

use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::Rng;

pub use adam::{adam_step, AdamState};
pub use loss::{node_loss, walk_loss, NodeLossForm};

use crate::autodiff::{finite_diff_check, GradCheckReport, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{AliasSampler, AliasTable, Graph, NodeId};
use crate::model::{
    build_plan, embed_all, forward, Aggregation, MeanMode, MechanicsStats, ModelConfig,
    ModelParams, ParamVars,
};
use crate::seed;
use crate::walks::{sample_walks, PairSampler, TripleSampler, WalkCorpus, WalkParams};

const TAG_INIT: u64 = 1;
const TAG_PAIRS: u64 = 2;
const TAG_NEGATIVES: u64 = 3;
const TAG_TRIPLES: u64 = 4;
const TAG_FORWARD: u64 = 5;
const TAG_EVAL: u64 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub neg_k: usize,
    pub walks_per_layer: usize,
    pub mu: f64,
    pub pattern_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub layers: usize,
    pub lr: f64,
    /// Context pairs per iteration.
    pub batch_size: usize,
    pub triples_per_node: usize,
    pub max_iters: usize,
    /// Iterations without a new best moving-average loss before stopping.
    pub patience: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
    pub mean: MeanMode,
    pub include_source: bool,
    pub node_loss_form: NodeLossForm,
    /// Skip the walk objective's triples entirely.
    pub withhold_triples: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            walks_per_node: 100,
            walk_length: 8,
            window: 5,
            neg_k: 8,
            walks_per_layer: 20,
            mu: 0.1,
            pattern_dim: 30,
            hidden_dim: 100,
            output_dim: 32,
            layers: 2,
            lr: 0.005,
            batch_size: 256,
            triples_per_node: 5,
            max_iters: 1000,
            patience: 10,
            seed: 0,
            aggregation: Aggregation::Full,
            mean: MeanMode::Flat,
            include_source: true,
            node_loss_form: NodeLossForm::Standard,
            withhold_triples: false,
        }
    }
}

/// Moving-average window of the convergence rule.
pub const LOSS_WINDOW: usize = 10;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("walks_per_layer", self.walks_per_layer),
            ("pattern_dim", self.pattern_dim),
            ("hidden_dim", self.hidden_dim),
            ("output_dim", self.output_dim),
            ("layers", self.layers),
            ("batch_size", self.batch_size),
            ("max_iters", self.max_iters),
            ("patience", self.patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.walk_length < 2 {
            return Err(Error::invalid("walk_length must be at least 2"));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid("mu must be a finite non-negative number"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be positive"));
        }
        Ok(())
    }

    pub fn walk_params(&self) -> WalkParams {
        WalkParams {
            walks_per_node: self.walks_per_node,
            walk_length: self.walk_length,
        }
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            output_dim: self.output_dim,
            layers: self.layers,
            pattern_dim: self.pattern_dim,
            walks_per_layer: self.walks_per_layer,
            aggregation: self.aggregation,
            mean: self.mean,
            include_source: self.include_source,
        }
    }
}

/// Draws nodes with probability proportional to `degree^0.75`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    table: AliasTable,
}

impl NegativeSampler {
    pub fn new(g: &Graph) -> Result<Self> {
        let w: Vec<f64> = (0..g.num_nodes()).map(|v| (g.degree(v) as f64).powf(0.75)).collect();
        Ok(NegativeSampler {
            table: AliasTable::new(&w)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        self.table.sample(rng)
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<NodeId> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

/// Training material of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub centers: Vec<NodeId>,
    pub contexts: Vec<NodeId>,
    /// `neg_k` per center, grouped by center.
    pub negatives: Vec<NodeId>,
    /// Walk-table rows `[anchor, positive, negative]`.
    pub triples: Vec<[usize; 3]>,
}

impl Batch {
    fn nodes(&self) -> Vec<NodeId> {
        let mut v = Vec::with_capacity(self.centers.len() * 2 + self.negatives.len());
        v.extend(&self.centers);
        v.extend(&self.contexts);
        v.extend(&self.negatives);
        v
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    pub node_loss: f64,
    pub walk_loss: f64,
    pub total: f64,
}

pub fn write_history<W: Write>(history: &[LossRecord], mut out: W) -> Result<()> {
    writeln!(out, "iter,node_loss,walk_loss,total")?;
    for r in history {
        writeln!(out, "{},{},{},{}", r.iter, r.node_loss, r.walk_loss, r.total)?;
    }
    Ok(())
}

/// Trailing `LOSS_WINDOW`-iteration means of the total loss; entry `i`
/// covers iterations `i..i + LOSS_WINDOW`.
pub fn moving_average(history: &[LossRecord]) -> Vec<f64> {
    history
        .windows(LOSS_WINDOW)
        .map(|w| w.iter().map(|r| r.total).sum::<f64>() / LOSS_WINDOW as f64)
        .collect()
}

pub struct TrainOutput {
    pub params: ModelParams,
    /// `|V| x output_dim`, row `v` is node `v`.
    pub embeddings: Tensor,
    pub history: Vec<LossRecord>,
    /// Monitor over every training forward and the final embedding pass.
    pub mechanics: MechanicsStats,
    pub converged: bool,
}

struct Objective {
    total: Var,
    node: Var,
    walk: Var,
    stats: MechanicsStats,
}

#[allow(clippy::too_many_arguments)]
fn objective(
    tape: &mut Tape,
    vars: &ParamVars,
    model: &ModelConfig,
    graph: &Graph,
    corpus: &WalkCorpus,
    params: &ModelParams,
    batch: &Batch,
    forward_seed: u64,
    config: &TrainConfig,
) -> Result<Objective> {
    let rows = params.pattern_rows(corpus);
    let plan = build_plan(&batch.nodes(), corpus, params, &rows, forward_seed)?;
    let out = forward(tape, vars, model, graph, &plan)?;
    let b = batch.centers.len();
    let r = plan.batch_rows();
    let node = node_loss(
        tape,
        out.embeddings,
        &r[..b],
        &r[b..2 * b],
        &r[2 * b..],
        config.node_loss_form,
    )?;
    let walk = walk_loss(tape, vars.walk_table, &batch.triples)?;
    let weighted = tape.scale(walk, config.mu)?;
    let total = tape.add(node, weighted)?;
    Ok(Objective {
        total,
        node,
        walk,
        stats: out.stats,
    })
}

struct BatchSource<'a> {
    corpus: &'a WalkCorpus,
    pairs: PairSampler,
    negatives: NegativeSampler,
    triples: TripleSampler,
    pattern_rows: Vec<usize>,
    iters_per_epoch: usize,
    pool: Vec<[usize; 3]>,
    pool_epoch: Option<usize>,
}

impl<'a> BatchSource<'a> {
    fn new(graph: &Graph, corpus: &'a WalkCorpus, params: &ModelParams, config: &TrainConfig) -> Result<Self> {
        let work = corpus.active_nodes() * config.triples_per_node.max(1);
        Ok(BatchSource {
            corpus,
            pairs: PairSampler::new(corpus, config.window)?,
            negatives: NegativeSampler::new(graph)?,
            triples: TripleSampler::new(corpus),
            pattern_rows: params.pattern_rows(corpus),
            iters_per_epoch: work.div_ceil(config.batch_size).max(1),
            pool: Vec::new(),
            pool_epoch: None,
        })
    }

    fn batch(&mut self, t: usize, config: &TrainConfig) -> Batch {
        let seed = config.seed;
        let mut rng = seed::stream(seed, &[TAG_PAIRS, t as u64]);
        let (centers, contexts) = (0..config.batch_size)
            .map(|_| self.pairs.sample(self.corpus, &mut rng))
            .unzip();
        let mut rng = seed::stream(seed, &[TAG_NEGATIVES, t as u64]);
        let negatives = self.negatives.sample_many(config.batch_size * config.neg_k, &mut rng);

        let mut triples = Vec::new();
        if !config.withhold_triples && config.triples_per_node > 0 {
            let epoch = t / self.iters_per_epoch;
            if self.pool_epoch != Some(epoch) {
                let mut rng = seed::stream(seed, &[TAG_TRIPLES, epoch as u64]);
                let rows = &self.pattern_rows;
                self.pool = self
                    .triples
                    .sample(config.triples_per_node, &mut rng)
                    .into_iter()
                    .map(|w| {
                        [
                            rows[w.anchor as usize],
                            rows[w.positive as usize],
                            rows[w.negative as usize],
                        ]
                    })
                    .collect();
                self.pool.shuffle(&mut rng);
                self.pool_epoch = Some(epoch);
            }
            let share = self.pool.len().div_ceil(self.iters_per_epoch);
            let i = t % self.iters_per_epoch;
            let lo = (i * share).min(self.pool.len());
            let hi = ((i + 1) * share).min(self.pool.len());
            triples.extend_from_slice(&self.pool[lo..hi]);
        }
        Batch {
            centers,
            contexts,
            negatives,
            triples,
        }
    }
}

fn input_dim(graph: &Graph) -> Result<usize> {
    graph
        .features()
        .map(|f| f.dim())
        .ok_or_else(|| Error::invalid("graph has no node features"))
}

fn check_corpus(graph: &Graph, corpus: &WalkCorpus, config: &TrainConfig) -> Result<()> {
    if corpus.num_nodes() != graph.num_nodes() {
        return Err(Error::invalid("corpus and graph disagree on the node count"));
    }
    if corpus.params() != config.walk_params() {
        return Err(Error::invalid(format!(
            "corpus was sampled with {:?}, config asks for {:?}",
            corpus.params(),
            config.walk_params()
        )));
    }
    Ok(())
}

/// Minimizes `node_loss + mu * walk_loss` with Adam, then embeds every node.
pub fn train(graph: &Graph, corpus: &WalkCorpus, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    check_corpus(graph, corpus, config)?;
    let model = config.model_config(input_dim(graph)?);
    let mut params = ModelParams::init(
        model.clone(),
        corpus.registry().clone(),
        seed::derive(config.seed, &[TAG_INIT]),
    )?;
    let mut source = BatchSource::new(graph, corpus, &params, config)?;
    let mut adam = AdamState::for_tensors(&params.tensors());
    let mut history = Vec::new();
    let mut mechanics = MechanicsStats::default();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut converged = false;

    for t in 0..config.max_iters {
        let batch = source.batch(t, config);
        let mut tape = Tape::new();
        let vars = params.record(&mut tape, true);
        let forward_seed = seed::derive(config.seed, &[TAG_FORWARD, t as u64]);
        let obj = objective(
            &mut tape, &vars, &model, graph, corpus, &params, &batch, forward_seed, config,
        )
        .map_err(|e| match e {
            Error::NonFinite(op) => Error::Diverged {
                iteration: t,
                detail: format!("non-finite value in {op}"),
            },
            other => other,
        })?;
        mechanics.merge(&obj.stats);
        let record = LossRecord {
            iter: t,
            node_loss: tape.value(obj.node).data()[0],
            walk_loss: tape.value(obj.walk).data()[0],
            total: tape.value(obj.total).data()[0],
        };
        tape.backward(obj.total).map_err(|e| Error::Diverged {
            iteration: t,
            detail: e.to_string(),
        })?;
        let all = vars.all();
        let grads: Vec<Option<&[f64]>> = all.iter().map(|&v| tape.grad(v)).collect();
        adam_step(&mut params.tensors_mut(), &grads, &mut adam, config.lr).map_err(|e| {
            Error::Diverged {
                iteration: t,
                detail: e.to_string(),
            }
        })?;
        history.push(record);

        if history.len() >= LOSS_WINDOW {
            let ma = history[history.len() - LOSS_WINDOW..].iter().map(|r| r.total).sum::<f64>()
                / LOSS_WINDOW as f64;
            if ma < best {
                best = ma;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    converged = true;
                    info!("converged after {} iterations (moving average {best:.6})", t + 1);
                    break;
                }
            }
        }
        if t % 50 == 0 {
            debug!(
                "iter {t}: node {:.5} walk {:.5} total {:.5}",
                record.node_loss, record.walk_loss, record.total
            );
        }
    }

    let (embeddings, stats) = embed_all(
        graph,
        corpus,
        &params,
        seed::derive(config.seed, &[TAG_EVAL]),
        512,
    )?;
    mechanics.merge(&stats);
    Ok(TrainOutput {
        params,
        embeddings,
        history,
        mechanics,
        converged,
    })
}

/// Samples the walk corpus of `graph` with uniform neighbor selection and
/// trains on it.
pub fn train_graph(graph: &Graph, config: &TrainConfig) -> Result<TrainOutput> {
    let corpus = sample_walks(graph, &AliasSampler::uniform(graph), config.walk_params(), config.seed)?;
    train(graph, &corpus, config)
}

/// Finite-difference check of the full objective at initialization, on one
/// fixed batch of `config.batch_size` pairs.
pub fn objective_gradcheck(
    graph: &Graph,
    corpus: &WalkCorpus,
    config: &TrainConfig,
    eps: f64,
    coords_per_tensor: usize,
) -> Result<(GradCheckReport, Vec<String>)> {
    config.validate()?;
    check_corpus(graph, corpus, config)?;
    let model = config.model_config(input_dim(graph)?);
    let params = ModelParams::init(
        model.clone(),
        corpus.registry().clone(),
        seed::derive(config.seed, &[TAG_INIT]),
    )?;
    let mut source = BatchSource::new(graph, corpus, &params, config)?;
    let batch = source.batch(0, config);
    let forward_seed = seed::derive(config.seed, &[TAG_FORWARD, 0]);
    let names = params.tensor_names();
    let tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    let report = finite_diff_check(
        |tape, vars| {
            let vars = ParamVars::from_slice(vars)?;
            let obj = objective(
                tape, &vars, &model, graph, corpus, &params, &batch, forward_seed, config,
            )?;
            Ok(obj.total)
        },
        &tensors,
        eps,
        coords_per_tensor,
        config.seed,
    )?;
    Ok((report, names))
}

#[cfg(test)]
mod tests;
