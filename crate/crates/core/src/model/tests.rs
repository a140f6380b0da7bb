use std::collections::HashMap;

use super::*;
use crate::autodiff::{Tape, Tensor};
use crate::graph::{generate_er, generate_triad_circle, AliasSampler, FeatureInit, Features, Graph};
use crate::walks::{sample_walks, PatternRegistry, WalkCorpus, WalkParams};

fn corpus(g: &Graph, gamma: usize, l: usize, seed: u64) -> WalkCorpus {
    let params = WalkParams {
        walks_per_node: gamma,
        walk_length: l,
    };
    sample_walks(g, &AliasSampler::uniform(g), params, seed).unwrap()
}

fn small_config(input_dim: usize) -> ModelConfig {
    ModelConfig {
        hidden_dim: 6,
        output_dim: 4,
        pattern_dim: 5,
        walks_per_layer: 5,
        ..ModelConfig::new(input_dim)
    }
}

fn er_setup(seed: u64) -> (Graph, WalkCorpus, ModelParams) {
    let g = generate_er(30, 0.15, seed, FeatureInit::Noise(3)).unwrap();
    let c = corpus(&g, 12, 6, seed);
    let p = ModelParams::init(small_config(3), c.registry().clone(), seed).unwrap();
    (g, c, p)
}

fn embed(g: &Graph, c: &WalkCorpus, p: &ModelParams, nodes: &[usize], seed: u64) -> Tensor {
    let rows = p.pattern_rows(c);
    let plan = build_plan(nodes, c, p, &rows, seed).unwrap();
    let mut tape = Tape::new();
    let vars = p.record(&mut tape, false);
    let out = forward(&mut tape, &vars, &p.config, g, &plan).unwrap();
    tape.value(out.embeddings).select_rows(plan.batch_rows())
}

#[test]
fn init_shapes_follow_dims() {
    let mut reg = PatternRegistry::new();
    reg.register(&[1, 2, 1]);
    let p = ModelParams::init(ModelConfig::new(300), reg, 3).unwrap();
    assert_eq!(p.walk_table.shape(), (2, 30));
    let l1 = &p.layers[0];
    assert_eq!(l1.u.shape(), (100, 300));
    assert_eq!(l1.v.shape(), (100, 300));
    assert_eq!(l1.q.shape(), (300, 30));
    assert_eq!(l1.p.shape(), (1, 30));
    assert_eq!(l1.r.shape(), (1, 300));
    let l2 = &p.layers[1];
    assert_eq!(l2.u.shape(), (32, 100));
    assert_eq!(l2.q.shape(), (100, 30));
    assert_eq!(l2.b.data(), &[0.0]);
    assert!(l2.r.data().iter().all(|&x| x == 0.0));
    for t in p.tensors() {
        assert!(t.data().iter().all(|x| x.abs() <= 1.0));
    }
    let again = ModelParams::init(ModelConfig::new(300), p.registry.clone(), 3).unwrap();
    assert_eq!(p, again);
    let other = ModelParams::init(ModelConfig::new(300), p.registry.clone(), 4).unwrap();
    assert_ne!(p, other);
}

#[test]
fn attention_examples() {
    let (_, _, mut p) = er_setup(1);
    assert_eq!(attention_coeffs(&p, 1, &[0]).unwrap(), vec![1.0]);
    assert_eq!(attention_coeffs(&p, 1, &[2, 2]).unwrap(), vec![0.5, 0.5]);
    assert!(attention_coeffs(&p, 1, &[]).is_err());
    p.layers[1].p = Tensor::zeros(1, 5);
    p.layers[1].b = Tensor::scalar(3.0);
    let lam = attention_coeffs(&p, 2, &[0, 1, 2, 3]).unwrap();
    assert!(lam.iter().all(|&x| (x - 0.25).abs() < 1e-15));
}

#[test]
fn gate_examples() {
    let (_, _, mut p) = er_setup(2);
    let g = amplification_gate(&p, 1, 0).unwrap();
    assert_eq!(g.len(), 3);
    assert!(g.iter().all(|&x| x > 0.0 && x < 1.0));
    p.layers[0].q = Tensor::zeros(3, 5);
    assert_eq!(amplification_gate(&p, 1, 1).unwrap(), vec![0.5; 3]);
    p.layers[0].r = Tensor::row_vector(vec![20.0, 0.0, 0.0]);
    let g = amplification_gate(&p, 1, 1).unwrap();
    assert!(g[0] > 0.9999 && g[0] < 1.0);
}

fn identity(n: usize) -> Tensor {
    let mut t = Tensor::zeros(n, n);
    for i in 0..n {
        t.data_mut()[i * n + i] = 1.0;
    }
    t
}

fn layer_with(u: Tensor, v: Tensor, din: usize, gate_bias: f64) -> LayerParams {
    LayerParams {
        u,
        v,
        p: Tensor::zeros(1, 2),
        b: Tensor::zeros(1, 1),
        q: Tensor::zeros(din, 2),
        r: Tensor::full(1, din, gate_bias),
    }
}

fn hand_params(din: usize, dout: usize, u: Tensor, v: Tensor, gate_bias: f64) -> ModelParams {
    let mut reg = PatternRegistry::new();
    reg.register(&[1, 2, 1]);
    ModelParams {
        config: ModelConfig {
            input_dim: din,
            hidden_dim: dout,
            output_dim: dout,
            layers: 1,
            pattern_dim: 2,
            walks_per_layer: 1,
            ..ModelConfig::new(din)
        },
        walk_table: Tensor::zeros(2, 2),
        layers: vec![layer_with(u, v, din, gate_bias)],
        registry: reg,
    }
}

#[test]
fn aggregate_identity_case() {
    // sigmoid(40) rounds to exactly 1.0
    let p = hand_params(3, 3, identity(3), identity(3), 40.0);
    let sample = NeighborhoodSample {
        node: 7,
        walks: vec![SampledWalk {
            pattern_row: 0,
            radius: 1,
            nodes: vec![7],
        }],
    };
    let h: HashMap<_, _> = [(7, vec![1.5, -2.0, 0.25])].into_iter().collect();
    assert_eq!(aggregate_layer(&p, 1, &h, &sample).unwrap(), vec![3.0, 0.0, 0.5]);

    let zeros: HashMap<_, _> = [(7, vec![0.0; 3])].into_iter().collect();
    assert_eq!(aggregate_layer(&p, 1, &zeros, &sample).unwrap(), vec![0.0; 3]);

    let missing: HashMap<usize, Vec<f64>> = HashMap::new();
    assert!(aggregate_layer(&p, 1, &missing, &sample).is_err());
}

#[test]
fn aggregate_hand_computed_three_nodes() {
    // Path x - y - z, center y, two walks: (y, x, y) with radius 3 and
    // (y, z) with radius 2. Gates saturate to 1 and attention is uniform, so
    // a = 0.5 * (h_y + h_x + h_y + h_y + h_z) / 5.
    let u = Tensor::new(1, 2, vec![1.0, 0.0]).unwrap();
    let v = Tensor::new(1, 2, vec![0.0, 10.0]).unwrap();
    let p = hand_params(2, 1, u, v, 40.0);
    let (x, y, z) = (0, 1, 2);
    let sample = NeighborhoodSample {
        node: y,
        walks: vec![
            SampledWalk {
                pattern_row: 0,
                radius: 3,
                nodes: vec![y, x, y],
            },
            SampledWalk {
                pattern_row: 0,
                radius: 2,
                nodes: vec![y, z],
            },
        ],
    };
    let h: HashMap<_, _> = [(x, vec![1.0, 1.0]), (y, vec![2.0, 0.5]), (z, vec![0.0, 3.0])]
        .into_iter()
        .collect();
    // second channel of a: 0.5 * (0.5 + 1 + 0.5 + 0.5 + 3) / 5 = 0.55
    let out = aggregate_layer(&p, 1, &h, &sample).unwrap();
    assert!((out[0] - (2.0 + 10.0 * 0.55)).abs() < 1e-12, "{out:?}");

    let mut per_walk = p.clone();
    per_walk.config.mean = MeanMode::PerWalk;
    // 0.5 * (0.5 * (0.5 + 1 + 0.5) / 3 + 0.5 * (0.5 + 3) / 2)
    let expect = 0.5 * (0.5 * 2.0 / 3.0 + 0.5 * 3.5 / 2.0);
    let out = aggregate_layer(&per_walk, 1, &h, &sample).unwrap();
    assert!((out[0] - (2.0 + 10.0 * expect)).abs() < 1e-12);
}

#[test]
fn walk_order_does_not_matter() {
    let (_, c, p) = er_setup(4);
    let rows = p.pattern_rows(&c);
    let mut sample = sample_neighborhood(&c, &p.config, &rows, 3, 1, 9);
    let h: HashMap<_, _> = (0..30).map(|v| (v, vec![v as f64 * 0.1, 1.0, -0.5])).collect();
    let a = aggregate_layer(&p, 1, &h, &sample).unwrap();
    sample.walks.reverse();
    let b = aggregate_layer(&p, 1, &h, &sample).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

/// The batched tape forward agrees with node-by-node aggregation.
#[test]
fn tape_forward_matches_reference() {
    for mode in [MeanMode::Flat, MeanMode::PerWalk] {
        for agg in [Aggregation::Full, Aggregation::PlainMean] {
            let (g, c, mut p) = er_setup(5);
            p.config.mean = mode;
            p.config.aggregation = agg;
            let rows = p.pattern_rows(&c);
            let seed = 17;
            let Some(Features::Dense { dim, data }) = g.features() else { panic!() };
            let mut h: HashMap<usize, Vec<f64>> =
                (0..30).map(|v| (v, data[v * dim..(v + 1) * dim].to_vec())).collect();
            for k in 1..=2 {
                h = (0..30)
                    .map(|v| {
                        let s = sample_neighborhood(&c, &p.config, &rows, v, k, seed);
                        (v, aggregate_layer(&p, k, &h, &s).unwrap())
                    })
                    .collect();
            }
            let batch = [4, 0, 4, 29, 13];
            let out = embed(&g, &c, &p, &batch, seed);
            for (i, &v) in batch.iter().enumerate() {
                for (x, y) in out.row(i).iter().zip(&h[&v]) {
                    assert!((x - y).abs() < 1e-12, "{mode:?} {agg:?} node {v}");
                }
            }
        }
    }
}

#[test]
fn forward_shape_and_determinism() {
    let (g, c, p) = er_setup(6);
    let batch: Vec<usize> = (0..20).collect();
    let a = embed(&g, &c, &p, &batch, 1);
    assert_eq!(a.shape(), (20, 4));
    assert!(a.data().iter().all(|&x| x >= 0.0));
    let b = embed(&g, &c, &p, &batch, 1);
    assert_eq!(a, b);
    let other = embed(&g, &c, &p, &batch, 2);
    assert_ne!(a, other);
}

#[test]
fn embed_all_is_chunk_independent() {
    let (g, c, p) = er_setup(7);
    let (a, sa) = embed_all(&g, &c, &p, 5, 7).unwrap();
    let (b, _) = embed_all(&g, &c, &p, 5, 1000).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.shape(), (30, 4));
    assert!(sa.max_attention_deviation < 1e-9);
    assert!(sa.gates_in_open_unit());
}

#[test]
fn uniform_structure_gives_identical_rows() {
    // perfect matching: every walk has pattern (1,2,1,2,...)
    let edges: Vec<(usize, usize)> = (0..10).map(|i| (2 * i, 2 * i + 1)).collect();
    let (g, _) = Graph::from_edges(20, &edges).unwrap();
    let g = g.with_features(Features::dense(2, vec![0.3; 40]).unwrap()).unwrap();
    let c = corpus(&g, 10, 8, 1);
    assert_eq!(c.registry().len(), 1);
    let mut cfg = small_config(2);
    cfg.layers = 1;
    let p = ModelParams::init(cfg, c.registry().clone(), 1).unwrap();
    let (e, _) = embed_all(&g, &c, &p, 3, 64).unwrap();
    for r in 1..20 {
        assert_eq!(e.row(r), e.row(0));
    }

    // plain mean with identical features is uniform on any graph
    let g = generate_er(40, 0.1, 3, FeatureInit::Constant).unwrap();
    let c = corpus(&g, 10, 8, 1);
    let mut cfg = small_config(1);
    cfg.layers = 1;
    cfg.aggregation = Aggregation::PlainMean;
    let p = ModelParams::init(cfg, c.registry().clone(), 1).unwrap();
    let (e, _) = embed_all(&g, &c, &p, 3, 64).unwrap();
    for v in 0..40 {
        if g.degree(v) > 0 {
            let first = (0..40).find(|&u| g.degree(u) > 0).unwrap();
            assert_eq!(e.row(v), e.row(first));
        }
    }
}

#[test]
fn mechanics_on_triad_circle() {
    let g = generate_triad_circle(20).unwrap();
    let c = corpus(&g, 50, 8, 2);
    let p = ModelParams::init(ModelConfig::new(1), c.registry().clone(), 2).unwrap();
    let (e, stats) = embed_all(&g, &c, &p, 4, 128).unwrap();
    assert!(stats.max_attention_deviation < 1e-9);
    assert!(stats.gates_in_open_unit());
    assert!(stats.radius_min >= 2 && stats.radius_max <= 8);
    // closed- and open-triad circle nodes already differ before training
    let mean = |parity: usize| -> Vec<f64> {
        let mut m = vec![0.0; 32];
        for v in (parity..20).step_by(2) {
            for (a, b) in m.iter_mut().zip(e.row(v)) {
                *a += b / 10.0;
            }
        }
        m
    };
    assert_ne!(mean(0), mean(1));
}

#[test]
fn unknown_patterns_share_the_last_row() {
    let (g, c, p) = er_setup(8);
    let mut fresh = p.clone();
    fresh.registry = PatternRegistry::new();
    let rows = fresh.pattern_rows(&c);
    assert!(rows.iter().all(|&r| r == fresh.unknown_pattern_row()));
    let c2 = corpus(&g, 12, 6, 99);
    let rows = p.pattern_rows(&c2);
    for (pid, &r) in rows.iter().enumerate() {
        let steps = &c2.registry().pattern(pid as u32).steps;
        match p.registry.get(steps) {
            Some(id) => assert_eq!(r, id as usize),
            None => assert_eq!(r, p.unknown_pattern_row()),
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (g, c, mut p) = er_setup(9);
    p.layers[0].b = Tensor::scalar(1.0 / 3.0);
    p.layers[1].r.data_mut()[0] = -1e-300;
    p.config.include_source = false;
    let mut buf = Vec::new();
    write_checkpoint(&p, &mut buf).unwrap();
    let back = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(back, p);
    let (a, _) = embed_all(&g, &c, &p, 1, 16).unwrap();
    let (b, _) = embed_all(&g, &c, &back, 1, 16).unwrap();
    assert_eq!(a, b);

    let text = String::from_utf8(buf).unwrap();
    let broken = text.replacen("tensor U1", "tensor X1", 1);
    assert!(read_checkpoint(broken.as_bytes()).is_err());
    let truncated = &text[..text.len() / 2];
    assert!(read_checkpoint(truncated.as_bytes()).is_err());
}

#[test]
fn missing_features_are_an_error() {
    let (g, _) = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
    let c = corpus(&g, 4, 4, 1);
    let p = ModelParams::init(small_config(4), c.registry().clone(), 1).unwrap();
    assert!(g.features().is_none());
    assert!(embed_all(&g, &c, &p, 1, 8).is_err());
}
