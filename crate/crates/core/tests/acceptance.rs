//! One line per acceptance criterion; exits nonzero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sau_core::corpus::{
    build_instances, build_vocab, dataset_stats, default_constants, fixtures, load_raw, DatasetFormat, ProblemInstance,
};
use sau_core::decoder::{DecodeMode, GateTarget, ModelConfig};
use sau_core::encoder::GruParams;
use sau_core::eqsolve::solve_tree;
use sau_core::harness::synth::{synthetic_records, Template};
use sau_core::harness::{evaluate, train, Control, EvalOptions, TrainConfig, TrainedModel};
use sau_core::nnmath::gradcheck::gradient_check;
use sau_core::nnmath::{Graph, NodeId, ParamStore, Shape};
use sau_core::uet::{from_prefix, parse_infix, parse_prefix, to_infix_symbolic, to_prefix, Unknown};
use sau_core::{Graph64, Model32, Model64};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn synthetic(n: usize, seed: u64) -> Vec<ProblemInstance> {
    let report = build_instances(&synthetic_records(n, seed, &Template::ALL), &default_constants());
    assert!(report.rejected.is_empty(), "{:?}", report.rejected);
    report.instances
}

fn random_input(g: &mut Graph64<'_>, n: usize, rng: &mut ChaCha8Rng) -> NodeId {
    g.input(Shape::vector(n), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .unwrap()
}

fn squash(g: &mut Graph64<'_>, x: NodeId) -> NodeId {
    let t = g.tanh(x);
    g.l2_norm(t)
}

const GRAD_TOL: f64 = 1e-4;
const H: f64 = 1e-4;

fn gradient_fidelity() -> Outcome {
    let started = Instant::now();
    let w = 8;
    let cases = fixtures::worked_cases();
    let vocab = build_vocab(&cases, 1);
    let m = Model64::new(ModelConfig::new(vocab.len(), w, w, default_constants().len()), 41);
    let d = m.decoder.clone();
    let mut worst: Vec<(&str, f64)> = Vec::new();

    let mut gru_store = ParamStore::<f64>::new();
    let cell = GruParams::register(&mut gru_store, "cell", w, w, &mut ChaCha8Rng::seed_from_u64(2));
    let r = gradient_check(
        &gru_store,
        |g| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let x = random_input(g, w, &mut rng);
            let h0 = random_input(g, w, &mut rng);
            let xp = cell.project_inputs(g, &[x]).unwrap()[0];
            let h1 = cell.step(g, xp, h0).unwrap();
            squash(g, h1)
        },
        H,
        None,
    );
    worst.push(("gru", r.max_rel_error));

    for target in GateTarget::ALL {
        let r = gradient_check(
            &m.store,
            |g| {
                let mut rng = ChaCha8Rng::seed_from_u64(5);
                let x = random_input(g, target.input_blocks() * w, &mut rng);
                let o = d.gate(target).apply(g, x).unwrap();
                squash(g, o)
            },
            H,
            None,
        );
        worst.push((target.name(), r.max_rel_error));
    }

    let states = |g: &mut Graph64<'_>, rng: &mut ChaCha8Rng| {
        let rows: Vec<NodeId> = (0..5).map(|_| random_input(g, w, rng)).collect();
        g.stack(&rows).unwrap()
    };
    let r = gradient_check(
        &m.store,
        |g| {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let s = states(g, &mut rng);
            let q = random_input(g, w, &mut rng);
            let keys = d.attention.keys(g, s).unwrap();
            let (c, _) = d.attention.attend(g, keys, s, q).unwrap();
            squash(g, c)
        },
        H,
        None,
    );
    worst.push(("attention", r.max_rel_error));

    let r = gradient_check(
        &m.store,
        |g| {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let e = states(g, &mut rng);
            let n = random_input(g, w, &mut rng);
            let c = random_input(g, w, &mut rng);
            let terms = d.score.candidate_terms(g, e).unwrap();
            let logits = d.score.logits(g, terms, n, c).unwrap();
            g.cross_entropy(logits, 2).unwrap()
        },
        H,
        None,
    );
    worst.push(("score", r.max_rel_error));

    let r = gradient_check(
        &m.store,
        |g| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let op = random_input(g, w, &mut rng);
            let l = random_input(g, w, &mut rng);
            let rr = random_input(g, w, &mut rng);
            let t = d.merge.apply(g, op, l, rr).unwrap();
            squash(g, t)
        },
        H,
        None,
    );
    worst.push(("merge", r.max_rel_error));

    let r = gradient_check(
        &m.store,
        |g| {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            let a = random_input(g, w, &mut rng);
            let t = random_input(g, w, &mut rng);
            let e = d.ssar.text_head(g, a).unwrap();
            let dd = d.ssar.tree_head(g, t).unwrap();
            let diff = g.sub(e, dd).unwrap();
            g.l2_norm(diff)
        },
        H,
        None,
    );
    worst.push(("ssar", r.max_rel_error));

    for (i, p) in cases.iter().enumerate().take(2) {
        let ids = vocab.encode(&p.tokens);
        let r = gradient_check(
            &m.store,
            |g| {
                let problem = m.prepare(g, p, &ids, &default_constants(), 0.0).unwrap();
                m.training_loss(g, &problem, &p.gold_prefix, 0.5).unwrap().total
            },
            H,
            Some(8),
        );
        worst.push((if i == 0 { "model-a" } else { "model-b" }, r.max_rel_error));
    }

    let elapsed = started.elapsed();
    let max = worst.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n}={e:.1e}"))
        .collect::<Vec<_>>()
        .join(" ");
    verdict(
        max < GRAD_TOL && elapsed < Duration::from_secs(60),
        format!(
            "max rel err {max:.2e} < {GRAD_TOL:e} [{detail}] in {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn structural_validity() -> Outcome {
    let corpus = synthetic(100, 21);
    let prep = TrainConfig {
        embed: 16,
        hidden: 16,
        epochs: 3,
        batch_size: 8,
        min_count: 1,
        dropout: 0.0,
        val_fraction: 0.0,
        ..TrainConfig::default()
    };
    let trained = train(&prep, &corpus, &mut |_, _| Control::Continue).unwrap().best;
    let vocab = trained.vocab.clone();
    let constants = default_constants();
    let mut models: Vec<Model32> = (0..4)
        .map(|s| Model32::new(ModelConfig::new(vocab.len(), 16, 16, constants.len()), 100 + s))
        .collect();
    models.push(trained.model.clone());
    let started = Instant::now();
    let (mut total, mut valid) = (0, 0);
    let mut failures = Vec::new();
    for (mi, m) in models.iter().enumerate() {
        for (pi, p) in corpus.iter().enumerate() {
            let modes: &[(DecodeMode, usize)] = if mi == 4 {
                &[
                    (DecodeMode::Greedy, 45),
                    (DecodeMode::Beam(3), 45),
                    (DecodeMode::Greedy, 7),
                ]
            } else {
                &[
                    (DecodeMode::Greedy, if pi % 2 == 0 { 45 } else { 9 }),
                    (DecodeMode::Beam(2), 45),
                ]
            };
            for (mode, max) in modes {
                let mut g = Graph::new(&m.store);
                let problem = m.prepare(&mut g, p, &vocab.encode(&p.tokens), &constants, 0.0).unwrap();
                total += 1;
                let ok = match m.decode(&mut g, &problem, mode.clone(), *max) {
                    Ok(out) => {
                        from_prefix(&out.prefix).is_ok()
                            && out.prefix.len() <= *max
                            && out.prefix.iter().all(|y| problem.target.contains(y))
                    }
                    Err(_) => false,
                };
                if ok {
                    valid += 1;
                } else if failures.len() < 3 {
                    failures.push(format!("{}:{mi}", p.id));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    verdict(
        total >= 1000 && valid == total && elapsed < Duration::from_secs(60),
        format!(
            "{valid}/{total} decodes valid in {:.1}s {failures:?}",
            elapsed.as_secs_f64()
        ),
    )
}

fn forced_fixture() -> Vec<ProblemInstance> {
    let mut v = fixtures::worked_cases();
    v.extend(synthetic(95, 33));
    v
}

fn stack_discipline() -> Outcome {
    let fixture = forced_fixture();
    let vocab = build_vocab(&fixture, 1);
    let constants = default_constants();
    let m = Model32::new(ModelConfig::new(vocab.len(), 8, 8, constants.len()), 5);
    let mut ok = 0;
    let mut bad = Vec::new();
    for p in &fixture {
        let mut g = Graph::new(&m.store);
        let problem = m.prepare(&mut g, p, &vocab.encode(&p.tokens), &constants, 0.0).unwrap();
        match m.decode(&mut g, &problem, DecodeMode::Forced(&p.gold_prefix), 45) {
            Ok(out)
                if out.state.steps.len() == p.gold_prefix.len()
                    && out.state.stacks.g.is_empty()
                    && out.state.stacks.t.is_empty()
                    && out.prefix == p.gold_prefix =>
            {
                ok += 1
            }
            _ => bad.push(p.id.clone()),
        }
    }
    verdict(
        fixture.len() == 100 && ok == fixture.len(),
        format!(
            "{ok}/{} forced decodes end with empty stacks in |gold| steps {bad:?}",
            fixture.len()
        ),
    )
}

fn uet_round_trip() -> Outcome {
    let fixture = forced_fixture();
    let mut ok = 0;
    let mut bad = Vec::new();
    for p in &fixture {
        let pass = (|| {
            let tree = from_prefix(&p.gold_prefix).ok()?;
            let infix = to_infix_symbolic(&tree).join(" ; ");
            let back = parse_infix(&infix, &p.slot_values()).ok()?;
            Some(to_prefix(&back) == p.gold_prefix)
        })()
        .unwrap_or(false);
        if pass {
            ok += 1;
        } else {
            bad.push(p.id.clone());
        }
    }
    verdict(
        ok == fixture.len(),
        format!(
            "{ok}/{} prefix->tree->infix->tree->prefix identical {bad:?}",
            fixture.len()
        ),
    )
}

/// Equations with constructed roots: `(prefix, slot values, unknown count, roots)`.
fn oracle_equations(n: usize) -> Vec<(String, Vec<f64>, usize, Vec<Vec<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let half = |rng: &mut ChaCha8Rng| rng.gen_range(-60i32..=60) as f64 / 2.0;
    let mut out = Vec::new();
    while out.len() < n {
        match out.len() % 5 {
            0 => {
                let (a, r, b) = (
                    rng.gen_range(1i32..=9) as f64,
                    half(&mut rng),
                    rng.gen_range(-20i32..=20) as f64,
                );
                out.push(("= + * n0 x n1 n2".into(), vec![a, b, a * r + b], 1, vec![vec![r]]));
            }
            1 => {
                let (r1, r2) = (half(&mut rng), half(&mut rng));
                if (r1 - r2).abs() < 0.5 {
                    continue;
                }
                let a = rng.gen_range(1i32..=4) as f64;
                let (b, c) = (-a * (r1 + r2), a * r1 * r2);
                let mut roots = vec![vec![r1.min(r2)], vec![r1.max(r2)]];
                roots.dedup();
                out.push(("= + * n0 * x x + * n1 x n2 0".into(), vec![a, b, c], 1, roots));
            }
            2 => {
                let mut rs: Vec<f64> = (0..3).map(|_| rng.gen_range(-15i32..=15) as f64).collect();
                rs.sort_by(f64::total_cmp);
                if rs.windows(2).any(|w| w[1] - w[0] < 1.0) {
                    continue;
                }
                out.push((
                    "= * * - x n0 - x n1 - x n2 0".into(),
                    rs.clone(),
                    1,
                    rs.iter().map(|r| vec![*r]).collect(),
                ));
            }
            3 => {
                let (x, y) = (half(&mut rng), half(&mut rng));
                let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-9i32..=9) as f64).collect();
                if c[0] * c[3] - c[1] * c[2] == 0.0 {
                    continue;
                }
                out.push((
                    "; = + * n0 x * n1 y n2 = + * n3 x * n4 y n5".into(),
                    vec![c[0], c[1], c[0] * x + c[1] * y, c[2], c[3], c[2] * x + c[3] * y],
                    2,
                    vec![vec![x, y]],
                ));
            }
            _ => {
                let (a, b) = (rng.gen_range(1i32..=50) as f64, rng.gen_range(1i32..=8) as f64);
                out.push(("= / n0 + x n1 n2".into(), vec![a * b, 3.0, b], 1, vec![vec![a - 3.0]]));
            }
        }
    }
    out
}

fn decimal(v: f64) -> sau_core::uet::Decimal {
    sau_core::uet::Decimal::from_f64(v).expect("finite")
}

fn solver_oracle() -> Outcome {
    let started = Instant::now();
    let mut ok = 0;
    let mut bad = Vec::new();
    let cases = oracle_equations(200);
    for (prefix, slots, unknowns, roots) in &cases {
        let tree = from_prefix(&parse_prefix(prefix).unwrap()).unwrap();
        let slots: Vec<_> = slots.iter().map(|v| decimal(*v)).collect();
        let sol = solve_tree(&tree, &slots, &Unknown::ALL[..*unknowns]);
        let mut got = sol.solutions.clone();
        got.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let pass = sol.is_solved()
            && got.len() == roots.len()
            && got
                .iter()
                .zip(roots)
                .all(|(g, r)| g.iter().zip(r).all(|(a, b)| (a - b).abs() <= 1e-6));
        if pass {
            ok += 1;
        } else if bad.len() < 3 {
            bad.push(format!("{prefix} {slots:?} -> {got:?}"));
        }
    }
    let table = |p: ProblemInstance, expect: &[&[f64]]| {
        let tree = from_prefix(&p.gold_prefix).unwrap();
        let sol = solve_tree(&tree, &p.slot_values(), &Unknown::ALL[..p.unknown_count]);
        sol.is_solved()
            && sol.solutions.len() == expect.len()
            && sol
                .solutions
                .iter()
                .zip(expect)
                .all(|(g, e)| g.iter().zip(*e).all(|(a, b)| (a - b).abs() <= 1e-6))
    };
    let linear = table(fixtures::chickens_and_rabbits(), &[&[15.0]]);
    let quadratic = table(fixtures::sheepfold(), &[&[10.0], &[15.0]]);
    let system = table(fixtures::chickens_and_rabbits_system(), &[&[15.0, 5.0]]);
    let elapsed = started.elapsed();
    verdict(
        ok == cases.len() && linear && quadratic && system && elapsed < Duration::from_secs(10),
        format!(
            "{ok}/{} constructed roots within 1e-6; linear x=15 {linear}, quadratic {{10,15}} {quadratic}, system (15,5) {system}; {:.2}s {bad:?}",
            cases.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        embed: 64,
        hidden: 128,
        batch_size: 8,
        epochs: 300,
        lr_halving_epochs: 100,
        dropout: 0.0,
        min_count: 1,
        val_fraction: 0.0,
        lambda: 0.01,
        beam: 1,
        seed: 7,
        ..TrainConfig::default()
    }
}

fn overfit() -> Outcome {
    let corpus = synthetic(50, 11);
    let cfg = overfit_config();
    let opts = EvalOptions::from_config(&cfg);
    let started = Instant::now();
    let mut best = 0.0f64;
    let mut at = None;
    let out = train(&cfg, &corpus, &mut |r, m| {
        if r.epoch % 5 == 4 {
            let acc = evaluate(m, &corpus, &opts).accuracy;
            best = best.max(acc);
            if acc >= 0.95 {
                at = Some(r.epoch + 1);
                return Control::Stop;
            }
        }
        Control::Continue
    })
    .unwrap();
    let elapsed = started.elapsed();
    let ssar_ok = out
        .history
        .iter()
        .all(|r| r.ssar_finite && r.min_ssar.is_some_and(|m| m >= 0.0) && r.mean_ssar.is_some_and(f64::is_finite));
    let final_ssar = out.history.last().and_then(|r| r.mean_ssar).unwrap_or(f64::NAN);
    verdict(
        at.is_some() && ssar_ok && elapsed < Duration::from_secs(15 * 60),
        format!(
            "train accuracy {:.1}% at epoch {:?} (best {:.1}%), SSAR finite and >= 0 every epoch: {ssar_ok} (final {final_ssar:.4}), {:.0}s",
            100.0 * evaluate(&out.last, &corpus, &opts).accuracy,
            at,
            100.0 * best,
            elapsed.as_secs_f64()
        ),
    )
}

fn ablation() -> Outcome {
    let mut means = [0.0f64; 2];
    let mut runs = Vec::new();
    for seed in 1..=3u64 {
        let train_set = synthetic(90, 100 + seed);
        let held_out = synthetic(60, 200 + seed);
        for (k, lambda) in [0.0, 0.01].into_iter().enumerate() {
            let cfg = TrainConfig {
                embed: 32,
                hidden: 64,
                batch_size: 8,
                epochs: 60,
                dropout: 0.0,
                min_count: 1,
                val_fraction: 0.0,
                beam: 1,
                lambda,
                seed,
                ..TrainConfig::default()
            };
            let model = train(&cfg, &train_set, &mut |_, _| Control::Continue).unwrap().best;
            let acc = evaluate(&model, &held_out, &EvalOptions::from_config(&cfg)).accuracy;
            means[k] += acc / 3.0;
            runs.push(format!("s{seed}/l{lambda}={:.1}", 100.0 * acc));
        }
    }
    verdict(
        means[1] >= means[0] - 0.02,
        format!(
            "held-out mean {:.1}% with SSAR vs {:.1}% without (allowed -2.0) [{}]",
            100.0 * means[1],
            100.0 * means[0],
            runs.join(" ")
        ),
    )
}

fn determinism() -> Outcome {
    let corpus = synthetic(30, 3);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let cfg = |dir: &std::path::Path| TrainConfig {
        embed: 16,
        hidden: 24,
        batch_size: 4,
        epochs: 15,
        min_count: 1,
        beam: 3,
        checkpoint: Some(dir.join("model.sau")),
        ..TrainConfig::default()
    };
    let runs: Vec<_> = dirs
        .iter()
        .map(|d| train(&cfg(d.path()), &corpus, &mut |_, _| Control::Continue).unwrap())
        .collect();
    let bytes: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| std::fs::read(d.path().join("model.sau")).unwrap())
        .collect();
    let bytes_equal = bytes[0] == bytes[1];
    let opts = EvalOptions::from_config(&cfg(dirs[0].path()));
    let reports: Vec<_> = dirs
        .iter()
        .map(|d| {
            evaluate(
                &TrainedModel::load(&d.path().join("model.sau")).unwrap(),
                &corpus,
                &opts,
            )
        })
        .collect();
    let same_history = runs[0]
        .history
        .iter()
        .zip(&runs[1].history)
        .all(|(x, y)| x.mean_loss == y.mean_loss);
    verdict(
        bytes_equal && reports[0] == reports[1] && same_history,
        format!(
            "checkpoints of {} bytes identical: {bytes_equal}, accuracy {:.3} vs {:.3}",
            bytes[0].len(),
            reports[0].accuracy,
            reports[1].accuracy
        ),
    )
}

fn math23k_count() -> Outcome {
    let Some(path) = std::env::var_os("MATH23K_PATH").map(PathBuf::from) else {
        return Outcome::Skip("MATH23K_PATH not set".into());
    };
    match load_raw(&path, DatasetFormat::Math23k) {
        Ok(records) => {
            let report = build_instances(&records, &default_constants());
            let stats = dataset_stats(&report.instances, report.records);
            verdict(
                stats.count == 23_161,
                format!(
                    "count {} (usable {}), avg equation length {:.2}, slots {:.2}, constants {:.2}, operators {:.2}",
                    stats.count,
                    stats.usable,
                    stats.avg_equation_length,
                    stats.avg_slots,
                    stats.avg_constants,
                    stats.avg_operators
                ),
            )
        }
        Err(e) => Outcome::Fail(format!("cannot load {}: {e}", path.display())),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("structural validity", structural_validity),
        ("stack discipline", stack_discipline),
        ("uet round-trip", uet_round_trip),
        ("solver oracle", solver_oracle),
        ("overfit sanity", overfit),
        ("ssar ablation direction", ablation),
        ("determinism", determinism),
        ("math23k count", math23k_count),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let line = match run() {
            Outcome::Pass(d) => format!("PASS {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                format!("FAIL {name}: {d}")
            }
            Outcome::Skip(d) => format!("SKIP {name}: {d}"),
        };
        println!("{line}");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
