use super::*;
use crate::corpus::{build_vocab, default_constants, fixtures, ProblemInstance, Vocabulary};
use crate::nnmath::gradcheck::gradient_check;
use crate::nnmath::{adam_step, AdamConfig, AdamState, Gradients, Graph, ParamStore, Shape, Tensor};
use crate::uet::{from_prefix, Operator, TargetSymbol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(vocab: &Vocabulary, h: usize, seed: u64) -> Model<f64> {
    Model::new(ModelConfig::new(vocab.len(), h, h, default_constants().len()), seed)
}

fn setup(h: usize, seed: u64) -> (Vec<ProblemInstance>, Vocabulary, Model<f64>) {
    let cases = fixtures::worked_cases();
    let vocab = build_vocab(&cases, 1);
    let m = model(&vocab, h, seed);
    (cases, vocab, m)
}

fn gate_1d(wq: f64, wv: f64) -> (ParamStore<f64>, GateParams) {
    let mut s = ParamStore::new();
    let one = |v| Tensor::from_vec(Shape::matrix(1, 1), vec![v]);
    let p = GateParams {
        gate_w: s.insert("wq", one(wq)),
        gate_b: s.insert("bq", Tensor::from_vec(Shape::vector(1), vec![0.0])),
        value_w: s.insert("wQ", one(wv)),
        value_b: s.insert("bQ", Tensor::from_vec(Shape::vector(1), vec![0.0])),
    };
    (s, p)
}

#[test]
fn scalar_gate_value() {
    let (s, p) = gate_1d(1.0, 1.0);
    let mut g = Graph::new(&s);
    let i = g.input(Shape::vector(1), vec![2.0]).unwrap();
    let o = p.apply(&mut g, i).unwrap();
    assert!((g.scalar(o) - 0.8491).abs() < 1e-4);
    let expect = 1.0 / (1.0 + (-2.0f64).exp()) * 2.0f64.tanh();
    assert!((g.scalar(o) - expect).abs() < 1e-15);
    let z = g.input(Shape::vector(1), vec![0.0]).unwrap();
    let o = p.apply(&mut g, z).unwrap();
    assert_eq!(g.scalar(o), 0.0);
}

#[test]
fn gate_outputs_bounded_and_shape_checked() {
    let (_, _, m) = setup(6, 3);
    let mut g = Graph::new(&m.store);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = g
        .input(Shape::vector(18), (0..18).map(|_| rng.gen_range(-5.0..5.0)).collect())
        .unwrap();
    let o = m.gate(&mut g, GateTarget::ChildLeft, x).unwrap();
    assert!(g.value(o).iter().all(|v| v.abs() < 1.0));
    assert!(m.gate(&mut g, GateTarget::NodeLeft, x).is_err());
}

#[test]
fn attention_single_state_and_uniform_cases() {
    let (cases, vocab, m) = setup(6, 5);
    let mut g = Graph::new(&m.store);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = g
        .input(Shape::matrix(1, 6), (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .unwrap();
    let n = g
        .input(Shape::vector(6), (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .unwrap();
    let a = &m.decoder.attention;
    let keys = a.keys(&mut g, h).unwrap();
    let (c, alpha) = a.attend(&mut g, keys, h, n).unwrap();
    assert_eq!(g.value(c), g.value(h));
    assert_eq!(g.value(alpha), &[1.0]);

    let row: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows = g.input(Shape::matrix(4, 6), row.repeat(4)).unwrap();
    let keys = a.keys(&mut g, rows).unwrap();
    let (c, alpha) = a.attend(&mut g, keys, rows, n).unwrap();
    assert!(g.value(alpha).iter().all(|w| (w - 0.25).abs() < 1e-12));
    for (x, y) in g.value(c).iter().zip(&row) {
        assert!((x - y).abs() < 1e-12);
    }

    let p = &cases[2];
    let problem = m
        .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    let (_, alpha) = m.attend(&mut g, &problem, problem.encoder.root).unwrap();
    assert!((g.value(alpha).iter().sum::<f64>() - 1.0).abs() < 1e-6);
    assert_eq!(g.value(alpha).len(), p.tokens.len());
}

#[test]
fn prediction_support_is_target_vocabulary() {
    let (cases, vocab, mut m) = setup(6, 7);
    let p = &cases[0];
    {
        let mut g = Graph::new(&m.store);
        let problem = m
            .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
            .unwrap();
        assert_eq!(problem.target.len(), 7 + 1 + 5 + 2);
        assert!(problem.index_of(&TargetSymbol::Slot(2)).is_none());
        assert!(problem
            .index_of(&TargetSymbol::Unknown(crate::uet::Unknown::Y))
            .is_none());
        let logits = m
            .predict(&mut g, &problem, problem.encoder.root, problem.encoder.root)
            .unwrap();
        assert_eq!(g.value(logits).len(), problem.target.len());
    }
    let v = m.decoder.score.v;
    m.store.get_mut(v).values.iter_mut().for_each(|x| *x = 0.0);
    let mut g = Graph::new(&m.store);
    let problem = m
        .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    let logits = m
        .predict(&mut g, &problem, problem.encoder.root, problem.encoder.root)
        .unwrap();
    let probs = g.softmax(logits).unwrap();
    let k = problem.target.len() as f64;
    assert!(g.value(probs).iter().all(|q| (q - 1.0 / k).abs() < 1e-12));
}

#[test]
fn merge_zero_weights_and_bounds() {
    let (_, _, mut m) = setup(8, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vecs: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    {
        let mut g = Graph::new(&m.store);
        let ids: Vec<_> = vecs
            .iter()
            .map(|v| g.input(Shape::vector(8), v.clone()).unwrap())
            .collect();
        let t = m.subtree_merge(&mut g, ids[0], ids[1], ids[2]).unwrap();
        assert!(g.value(t).iter().all(|v| v.abs() < 1.0));
    }
    let GateParams { gate_w, value_w, .. } = m.decoder.merge.0;
    for id in [gate_w, value_w] {
        m.store.get_mut(id).values.iter_mut().for_each(|x| *x = 0.0);
    }
    let mut g = Graph::new(&m.store);
    let ids: Vec<_> = vecs
        .iter()
        .map(|v| g.input(Shape::vector(8), v.clone()).unwrap())
        .collect();
    let t = m.subtree_merge(&mut g, ids[0], ids[1], ids[2]).unwrap();
    assert!(g.value(t).iter().all(|&v| v == 0.0));
}

#[test]
fn token_embeddings_dispatch() {
    let (cases, vocab, m) = setup(6, 11);
    let p = &cases[0];
    let mut g = Graph::new(&m.store);
    let problem = m
        .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    let plus = m.token_embedding(&problem, &TargetSymbol::Op(Operator::Add)).unwrap();
    assert_eq!(
        g.value(plus),
        m.store.get(m.decoder.op_embedding).row(Operator::Add.index())
    );
    let n0 = m.token_embedding(&problem, &TargetSymbol::Slot(0)).unwrap();
    let pos = p.slots[0].position;
    assert_eq!(p.tokens[pos], "NUM");
    assert_eq!(g.value(n0), g.value(problem.encoder.states[pos]));
    let again = m.token_embedding(&problem, &TargetSymbol::Slot(0)).unwrap();
    assert_eq!(g.value(n0), g.value(again));
    assert!(matches!(
        m.token_embedding(&problem, &TargetSymbol::Slot(9)),
        Err(DecoderError::OutsideVocabulary(_))
    ));
}

#[test]
fn forced_boat_trace() {
    let (cases, vocab, m) = setup(8, 13);
    let p = fixtures::boat_between_docks();
    assert_eq!(crate::uet::format_prefix(&p.gold_prefix), "= - / x n2 n4 + / x n3 n4");
    let _ = cases;
    let mut g = Graph::new(&m.store);
    let problem = m
        .prepare(&mut g, &p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    let out = m
        .decode(&mut g, &problem, DecodeMode::Forced(&p.gold_prefix), DEFAULT_MAX_NODES)
        .unwrap();
    assert_eq!(out.state.steps.len(), 11);
    assert!(out.state.stacks.g.is_empty());
    assert!(out.state.stacks.t.is_empty());
    let mut depth = 1usize;
    for (step, y) in out.state.steps.iter().zip(&p.gold_prefix) {
        if y.is_operator() {
            assert_eq!(step.g_depth, depth + 1);
            assert!(step.children.is_some());
        } else {
            assert_eq!(step.g_depth, depth - 1);
            assert!(step.children.is_none());
        }
        depth = step.g_depth;
    }
    assert_eq!(out.state.subtrees.len(), 5);
    assert_eq!(out.state.subtrees.last().copied(), out.state.root);
    assert!((out.log_prob - out.step_log_probs.iter().sum::<f64>()).abs() < 1e-9);
    for d in &out.state.distributions {
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn forced_errors() {
    let (cases, vocab, m) = setup(6, 13);
    let p = &cases[0];
    let mut g = Graph::new(&m.store);
    let problem = m
        .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    let short = &p.gold_prefix[..3];
    assert!(matches!(
        m.decode(&mut g, &problem, DecodeMode::Forced(short), 45),
        Err(DecoderError::IncompletePrefix)
    ));
    let mut long = vec![TargetSymbol::Unknown(crate::uet::Unknown::X)];
    long.push(TargetSymbol::Slot(0));
    assert!(matches!(
        m.decode(&mut g, &problem, DecodeMode::Forced(&long), 45),
        Err(DecoderError::TrailingSymbols { used: 1, len: 2 })
    ));
    let outside = [TargetSymbol::Slot(7)];
    assert!(matches!(
        m.decode(&mut g, &problem, DecodeMode::Forced(&outside), 45),
        Err(DecoderError::OutsideVocabulary(_))
    ));
}

#[test]
fn free_running_decodes_are_valid_trees() {
    let (cases, vocab, _) = setup(8, 0);
    for seed in 0..6 {
        let m = model(&vocab, 8, seed);
        for p in &cases {
            let mut g = Graph::new(&m.store);
            let problem = m
                .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
                .unwrap();
            for (mode, max) in [
                (DecodeMode::Greedy, 45),
                (DecodeMode::Beam(3), 45),
                (DecodeMode::Greedy, 5),
            ] {
                let out = m.decode(&mut g, &problem, mode, max).unwrap();
                assert!(out.prefix.len() <= max);
                from_prefix(&out.prefix).unwrap();
                assert!(out.prefix.iter().all(|y| problem.target.contains(y)));
                let ops = out.prefix.iter().filter(|y| y.is_operator()).count();
                assert_eq!(out.state.subtrees.len(), ops);
                assert!((out.log_prob - out.step_log_probs.iter().sum::<f64>()).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn beam_one_matches_greedy() {
    let (cases, vocab, m) = setup(8, 17);
    for p in &cases {
        let mut g = Graph::new(&m.store);
        let problem = m
            .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
            .unwrap();
        let a = m.decode(&mut g, &problem, DecodeMode::Greedy, 45).unwrap();
        let b = m.beam_search(&mut g, &problem, 1, 45).unwrap();
        assert_eq!(a.symbols, b.symbols);
        assert_eq!(a.log_prob, b.log_prob);
        let c = m.beam_search(&mut g, &problem, 5, 45).unwrap();
        assert!(c.log_prob >= a.log_prob - 1e-12);
    }
}

#[test]
fn max_nodes_zero_is_an_error() {
    let (cases, vocab, m) = setup(6, 1);
    let p = &cases[0];
    let mut g = Graph::new(&m.store);
    let problem = m
        .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    assert!(matches!(
        m.decode(&mut g, &problem, DecodeMode::Greedy, 0),
        Err(DecoderError::MaxNodesExceeded(0))
    ));
}

fn matvec(m: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.shape.rows)
        .map(|r| m.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

#[test]
fn ssar_single_subtree_by_hand() {
    let (cases, vocab, m) = setup(6, 19);
    let p = &cases[0];
    let mut g = Graph::new(&m.store);
    let problem = m
        .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    assert!(m.ssar_loss(&mut g, &problem, &[]).unwrap().is_none());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tv: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let t = g.input(Shape::vector(6), tv.clone()).unwrap();
    let loss = m.ssar_loss(&mut g, &problem, &[t]).unwrap().unwrap();

    let s = &m.store;
    let a = &m.decoder.attention;
    let states: Vec<Vec<f64>> = problem.encoder.states.iter().map(|&h| g.value(h).to_vec()).collect();
    let q: Vec<f64> = matvec(s.get(a.query), &tv)
        .iter()
        .zip(&s.get(a.bias).values)
        .map(|(x, b)| x + b)
        .collect();
    let energies: Vec<f64> = states
        .iter()
        .map(|h| {
            let k = matvec(s.get(a.key), h);
            k.iter()
                .zip(&q)
                .map(|(x, y)| (x + y).tanh())
                .zip(&s.get(a.v).values)
                .map(|(x, v)| x * v)
                .sum()
        })
        .collect();
    let alpha = crate::nnmath::softmax(&energies);
    let mut av = vec![0.0; 6];
    for (w, h) in alpha.iter().zip(&states) {
        for (o, x) in av.iter_mut().zip(h) {
            *o += w * x;
        }
    }
    let head = |w1, w2, x: &[f64]| {
        let h: Vec<f64> = matvec(s.get(w1), x).into_iter().map(f64::tanh).collect();
        matvec(s.get(w2), &h)
    };
    let e = head(m.decoder.ssar.e1, m.decoder.ssar.e2, &av);
    let d = head(m.decoder.ssar.d1, m.decoder.ssar.d2, &tv);
    let norm = d.iter().zip(&e).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!((g.scalar(loss) - norm).abs() < 1e-12);
    assert!(g.scalar(loss) >= 0.0);
}

#[test]
fn ssar_zero_when_heads_agree() {
    let (cases, vocab, mut m) = setup(6, 19);
    for id in [m.decoder.ssar.e2, m.decoder.ssar.d2] {
        m.store.get_mut(id).values.iter_mut().for_each(|x| *x = 0.0);
    }
    let p = &cases[0];
    let mut g = Graph::new(&m.store);
    let problem = m
        .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    let out = m
        .decode(&mut g, &problem, DecodeMode::Forced(&p.gold_prefix), 45)
        .unwrap();
    let loss = m.ssar_loss(&mut g, &problem, &out.state.subtrees).unwrap().unwrap();
    assert_eq!(g.scalar(loss), 0.0);
}

#[test]
fn separate_ssar_attention_switch() {
    let cases = fixtures::worked_cases();
    let vocab = build_vocab(&cases, 1);
    let mut cfg = ModelConfig::new(vocab.len(), 6, 6, 5);
    let shared = Model::<f64>::new(cfg.clone(), 1);
    cfg.separate_ssar_attention = true;
    let separate = Model::<f64>::new(cfg, 1);
    assert!(shared.decoder.ssar_attention.is_none());
    assert_eq!(
        separate.decoder.ssar_attention().query,
        separate.decoder.ssar_attention.unwrap().query
    );
    assert_eq!(separate.store.len(), shared.store.len() + 4);
}

#[test]
fn lambda_zero_is_pure_nll() {
    let (cases, vocab, m) = setup(6, 23);
    let p = &cases[3];
    let mut g = Graph::new(&m.store);
    let problem = m
        .prepare(&mut g, p, &vocab.encode(&p.tokens), &default_constants(), 0.0)
        .unwrap();
    let zero = m.training_loss(&mut g, &problem, &p.gold_prefix, 0.0).unwrap();
    assert!(zero.ssar.is_none());
    assert_eq!(g.scalar(zero.total), g.scalar(zero.nll));
    let out = m
        .decode(&mut g, &problem, DecodeMode::Forced(&p.gold_prefix), 45)
        .unwrap();
    assert!((g.scalar(zero.nll) + out.log_prob).abs() < 1e-9);
    let with = m.training_loss(&mut g, &problem, &p.gold_prefix, 0.01).unwrap();
    let s = g.scalar(with.ssar.unwrap());
    assert!((g.scalar(with.total) - g.scalar(with.nll) - 0.01 * s).abs() < 1e-12);
}

#[test]
fn loss_decreases_over_ten_adam_steps() {
    let (cases, vocab, mut m) = setup(8, 29);
    let p = &cases[0];
    let ids = vocab.encode(&p.tokens);
    let mut adam = AdamState::new(&m.store, AdamConfig::default());
    let mut grads = Gradients::zeros_like(&m.store);
    let mut losses = Vec::new();
    for _ in 0..11 {
        {
            let mut g = Graph::new(&m.store);
            let problem = m.prepare(&mut g, p, &ids, &default_constants(), 0.0).unwrap();
            let loss = m.training_loss(&mut g, &problem, &p.gold_prefix, 0.01).unwrap();
            losses.push(g.scalar(loss.total));
            grads.clear();
            g.backward(loss.total, &mut grads).unwrap();
        }
        adam_step(&mut m.store, &grads, &mut adam).unwrap();
    }
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn full_model_gradient_check_width_8() {
    let (cases, vocab, m) = setup(8, 31);
    let p = &cases[1];
    let ids = vocab.encode(&p.tokens);
    let report = gradient_check(
        &m.store,
        |g| {
            let problem = m.prepare(g, p, &ids, &default_constants(), 0.0).unwrap();
            m.training_loss(g, &problem, &p.gold_prefix, 0.5).unwrap().total
        },
        1e-4,
        Some(6),
    );
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn layout_check_on_reload() {
    let (_, vocab, m) = setup(6, 1);
    let back = Model::from_store(m.config.clone(), m.store.clone()).unwrap();
    assert_eq!(back.store, m.store);
    let mut wrong = m.config.clone();
    wrong.hidden = 8;
    assert!(matches!(
        Model::from_store(wrong, m.store.clone()),
        Err(DecoderError::Layout(_))
    ));
    let _ = vocab;
    let f32s: Model<f32> = m.cast();
    assert_eq!(f32s.parameter_count(), m.parameter_count());
}
