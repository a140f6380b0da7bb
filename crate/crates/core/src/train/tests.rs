use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{generate_er, AliasSampler, FeatureInit};
use crate::walks::sample_walks;

fn corpus_for(g: &Graph, cfg: &TrainConfig) -> WalkCorpus {
    sample_walks(g, &AliasSampler::uniform(g), cfg.walk_params(), cfg.seed).unwrap()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        pattern_dim: 8,
        hidden_dim: 16,
        output_dim: 8,
        batch_size: 32,
        walks_per_node: 20,
        seed,
        ..TrainConfig::default()
    }
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).item().unwrap()
}

fn table(rows: &[&[f64]]) -> Tensor {
    let cols = rows[0].len();
    Tensor::new(rows.len(), cols, rows.concat()).unwrap()
}

#[test]
fn walk_loss_values() {
    let mut tape = Tape::new();
    let t = tape.constant(table(&[&[0.3, -0.2], &[1.0, 0.0], &[0.0, 1.0]]));
    let l = walk_loss(&mut tape, t, &[[0, 0, 0]]).unwrap();
    assert!((scalar(&tape, l) - 2f64.ln()).abs() < 1e-12);
    let l = walk_loss(&mut tape, t, &[[1, 1, 2]]).unwrap();
    assert!((scalar(&tape, l) - 0.313262).abs() < 1e-6);

    // u_j.u_k - u_j.u_n = 10
    let t = tape.constant(table(&[&[1.0, 0.0], &[10.0, 0.0], &[0.0, 0.0]]));
    let l = walk_loss(&mut tape, t, &[[0, 1, 2]]).unwrap();
    assert!((scalar(&tape, l) - 4.54e-5).abs() < 1e-7);

    // mean, not sum
    let l = walk_loss(&mut tape, t, &[[0, 1, 2], [2, 2, 2]]).unwrap();
    let want = ((1.0 + (-10f64).exp()).ln() + 2f64.ln()) / 2.0;
    assert!((scalar(&tape, l) - want).abs() < 1e-12);

    let l = walk_loss(&mut tape, t, &[]).unwrap();
    assert_eq!(scalar(&tape, l), 0.0);
}

#[test]
fn node_loss_values() {
    let mut tape = Tape::new();
    let zeros = tape.constant(Tensor::zeros(3, 2));
    let l = node_loss(&mut tape, zeros, &[0], &[1], &[2], NodeLossForm::Standard).unwrap();
    assert!((scalar(&tape, l) - 1.386294).abs() < 1e-6);

    let e = tape.constant(table(&[&[1.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0]]));
    let l = node_loss(&mut tape, e, &[0], &[1], &[2], NodeLossForm::Standard).unwrap();
    assert!((scalar(&tape, l) - 0.626523).abs() < 1e-6);

    // averaged over pairs: two identical pairs give the single-pair value
    let l = node_loss(&mut tape, e, &[0, 0], &[1, 1], &[2, 2], NodeLossForm::Standard).unwrap();
    assert!((scalar(&tape, l) - 0.626523).abs() < 1e-6);

    // strongly aligned context, strongly opposed negative: near zero
    let e = tape.constant(table(&[&[30.0], &[30.0], &[-30.0]]));
    let l = node_loss(&mut tape, e, &[0], &[1], &[2], NodeLossForm::Standard).unwrap();
    let v = scalar(&tape, l);
    assert!((0.0..1e-12).contains(&v));

    // the printed form rewards large h_i.h_n without bound
    let e = tape.constant(table(&[&[1.0], &[1.0], &[-50.0]]));
    let l = node_loss(&mut tape, e, &[0], &[1], &[2], NodeLossForm::Printed).unwrap();
    let want = (1.0 + (-1f64).exp()).ln() - 50.0 - (1.0 + (-50f64).exp()).ln();
    assert!((scalar(&tape, l) - want).abs() < 1e-9);
    assert!(scalar(&tape, l) < 0.0);

    assert!(node_loss(&mut tape, e, &[], &[], &[], NodeLossForm::Standard).is_err());
    assert!(node_loss(&mut tape, e, &[0], &[1, 2], &[2], NodeLossForm::Standard).is_err());
    assert!(node_loss(&mut tape, e, &[0, 1], &[1, 2], &[2], NodeLossForm::Standard).is_err());
}

#[test]
fn negative_sampler_follows_degree_power() {
    // cycle: all degrees equal
    let n = 20;
    let edges: Vec<_> = (0..n).map(|v| (v, (v + 1) % n)).collect();
    let (g, _) = Graph::from_edges(n, &edges).unwrap();
    let s = NegativeSampler::new(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    let mut counts = vec![0usize; n];
    for v in s.sample_many(draws, &mut rng) {
        counts[v] += 1;
    }
    for c in counts {
        assert!((c as f64 / draws as f64 - 1.0 / n as f64).abs() < 0.02);
    }

    // star with 16 leaves: 16^0.75 = 8 times a leaf's weight
    let edges: Vec<_> = (1..=16).map(|v| (0, v)).collect();
    let (g, _) = Graph::from_edges(18, &[edges, vec![(17, 1)]].concat()).unwrap();
    let s = NegativeSampler::new(&g).unwrap();
    let mut counts = [0usize; 18];
    for v in s.sample_many(200_000, &mut rng) {
        counts[v] += 1;
    }
    let ratio = counts[0] as f64 / counts[5] as f64;
    assert!((ratio - 8.0).abs() < 0.6, "ratio {ratio}");

    let (g, _) = Graph::from_edges(4, &[(0, 1)]).unwrap();
    let s = NegativeSampler::new(&g).unwrap();
    for v in s.sample_many(1000, &mut rng) {
        assert!(v < 2, "isolated node {v} drawn");
    }
}

#[test]
fn adam_behaviour() {
    let mut a = Tensor::new(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
    let mut state = AdamState::for_tensors(&[&a]);
    let before = a.clone();
    adam_step(&mut [&mut a], &[None], &mut state, 0.01).unwrap();
    assert_eq!(a, before);
    assert_eq!(state.step_count(), 1);

    let mut state = AdamState::for_tensors(&[&a]);
    let g = [3.0, -1e-3, 0.0];
    adam_step(&mut [&mut a], &[Some(&g)], &mut state, 0.01).unwrap();
    let d: Vec<f64> = a.data().iter().zip(before.data()).map(|(x, y)| x - y).collect();
    // a bias-corrected first step moves by about lr against the gradient sign
    assert!((d[0] + 0.01).abs() < 1e-6);
    assert!((d[1] - 0.01).abs() < 1e-4);
    assert_eq!(d[2], 0.0);
    assert_eq!(state.step_count(), 1);

    let run = || {
        let mut t = Tensor::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut s = AdamState::for_tensors(&[&t]);
        for i in 0..20 {
            let g: Vec<f64> = t.data().iter().map(|x| x * (i as f64 + 1.0).sin()).collect();
            adam_step(&mut [&mut t], &[Some(&g)], &mut s, 0.05).unwrap();
        }
        t
    };
    assert_eq!(run(), run());

    let bad = [f64::NAN, 0.0, 0.0];
    assert!(matches!(
        adam_step(&mut [&mut a], &[Some(&bad)], &mut state, 0.01),
        Err(Error::Autodiff(_))
    ));
    assert!(adam_step(&mut [&mut a], &[Some(&[1.0])], &mut state, 0.01).is_err());
    assert!(adam_step(&mut [&mut a], &[], &mut state, 0.01).is_err());
}

#[test]
fn objective_passes_gradient_check() {
    for seed in 1..=3 {
        let cfg = small_config(seed);
        let g = generate_er(30, 0.2, seed, FeatureInit::Noise(8)).unwrap();
        let c = corpus_for(&g, &cfg);
        let (report, names) = objective_gradcheck(&g, &c, &cfg, 1e-4, 100).unwrap();
        assert_eq!(names.len(), 1 + 6 * cfg.layers);
        for (n, t) in names.iter().zip(&report.per_tensor) {
            assert!(t.coords_checked > 0, "{n}");
            assert!(t.max_rel_error < 1e-4, "seed {seed} {n}: {:e}", t.max_rel_error);
        }
    }
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        max_iters: 25,
        patience: 1000,
        ..small_config(seed)
    }
}

#[test]
fn training_is_deterministic() {
    let g = generate_er(60, 0.08, 4, FeatureInit::Noise(4)).unwrap();
    let cfg = quick_config(9);
    let c = corpus_for(&g, &cfg);
    let a = train(&g, &c, &cfg).unwrap();
    let b = train(&g, &c, &cfg).unwrap();
    assert_eq!(a.history.len(), 25);
    assert_eq!(a.history, b.history);
    assert_eq!(a.embeddings, b.embeddings);
    assert!(a.history.iter().all(|r| r.node_loss >= 0.0 && r.walk_loss >= 0.0 && r.total >= 0.0));
    assert!(a.embeddings.data().iter().all(|&x| x >= 0.0));
    assert_eq!(a.embeddings.shape(), (60, 8));

    let other = train(&g, &c, &quick_config(10)).unwrap();
    assert_ne!(a.history, other.history);
}

#[test]
fn zero_mu_matches_withheld_triples() {
    let g = generate_er(60, 0.08, 2, FeatureInit::Noise(4)).unwrap();
    let cfg = TrainConfig {
        mu: 0.0,
        ..quick_config(3)
    };
    let c = corpus_for(&g, &cfg);
    let a = train(&g, &c, &cfg).unwrap();
    let b = train(
        &g,
        &c,
        &TrainConfig {
            withhold_triples: true,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert!(a.history.iter().any(|r| r.walk_loss > 0.0));
    assert!(b.history.iter().all(|r| r.walk_loss == 0.0));
    for (x, y) in a.history.iter().zip(&b.history) {
        assert_eq!(x.node_loss.to_bits(), y.node_loss.to_bits());
        assert_eq!(x.total.to_bits(), y.total.to_bits());
    }
    assert_eq!(a.embeddings, b.embeddings);
}

#[test]
fn walk_objective_changes_training_when_weighted() {
    let g = generate_er(60, 0.08, 2, FeatureInit::Noise(4)).unwrap();
    let cfg = quick_config(3);
    let c = corpus_for(&g, &cfg);
    let a = train(&g, &c, &cfg).unwrap();
    let b = train(&g, &c, &TrainConfig { mu: 0.0, ..cfg.clone() }).unwrap();
    assert_ne!(a.params.walk_table, b.params.walk_table);
}

#[test]
fn history_csv_and_moving_average() {
    let history: Vec<LossRecord> = (0..12)
        .map(|i| LossRecord {
            iter: i,
            node_loss: i as f64,
            walk_loss: 0.5,
            total: i as f64 + 0.05,
        })
        .collect();
    let ma = moving_average(&history);
    assert_eq!(ma.len(), 3);
    assert!((ma[0] - 4.55).abs() < 1e-12);
    assert!((ma[2] - 6.55).abs() < 1e-12);
    let mut out = Vec::new();
    write_history(&history[..2], &mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "iter,node_loss,walk_loss,total\n0,0,0.5,0.05\n1,1,0.5,1.05\n"
    );
}

#[test]
fn convergence_rule_stops_early() {
    let g = generate_er(40, 0.1, 1, FeatureInit::Noise(4)).unwrap();
    let cfg = TrainConfig {
        max_iters: 400,
        patience: 3,
        lr: 0.05,
        ..small_config(1)
    };
    let c = corpus_for(&g, &cfg);
    let out = train(&g, &c, &cfg).unwrap();
    assert!(out.converged);
    assert!(out.history.len() < 400);
}

#[test]
fn rejects_bad_inputs() {
    let g = generate_er(30, 0.2, 1, FeatureInit::Noise(2)).unwrap();
    let cfg = small_config(1);
    let c = corpus_for(&g, &cfg);
    let bad = TrainConfig { walk_length: 6, ..cfg.clone() };
    assert!(train(&g, &c, &bad).is_err());
    assert!(train(&g, &c, &TrainConfig { lr: 0.0, ..cfg.clone() }).is_err());
    assert!(train(&g, &c, &TrainConfig { mu: -1.0, ..cfg.clone() }).is_err());
    let bare = generate_er(30, 0.2, 1, FeatureInit::Noise(2)).unwrap();
    let (plain, _) = Graph::from_edges(30, &bare.edges().collect::<Vec<_>>()).unwrap();
    assert!(train(&plain, &c, &cfg).is_err());
}
