//! Templated word problems with known answers, for smoke runs and tests.
//!
//! Every quantity in the text is at least 5 and distinct from the others,
//! so equation literals map to slots unambiguously and never collide with
//! the default constants.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// Chickens and rabbits with one unknown.
    ChickenRabbit,
    /// Chickens and rabbits as a two-unknown system.
    ChickenRabbitSystem,
    /// Two numbers from their sum and difference.
    SumDifference,
    /// Pen against a wall: `x(F - 2x) = A`.
    FenceArea,
    /// `x^2 + b·x = c`.
    SquarePlusLinear,
    /// `k·x + m = t`.
    Linear,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::ChickenRabbit,
        Template::Linear,
        Template::FenceArea,
        Template::SquarePlusLinear,
        Template::ChickenRabbitSystem,
        Template::SumDifference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::ChickenRabbit => "chicken-rabbit",
            Template::ChickenRabbitSystem => "chicken-rabbit-system",
            Template::SumDifference => "sum-difference",
            Template::FenceArea => "fence-area",
            Template::SquarePlusLinear => "square-plus-linear",
            Template::Linear => "linear",
        }
    }
}

fn distinct(values: &[i64]) -> bool {
    values.iter().all(|&v| v >= 5)
        && values
            .iter()
            .enumerate()
            .all(|(i, a)| values[i + 1..].iter().all(|b| a != b))
}

fn pick<'a>(rng: &mut impl Rng, options: &[&'a str]) -> &'a str {
    options.choose(rng).expect("non-empty options")
}

/// One problem of the given template; resamples until quantities are distinct.
pub fn generate(template: Template, id: &str, rng: &mut impl Rng) -> RawRecord {
    loop {
        let (text, equations, answers, quantities) = match template {
            Template::ChickenRabbit | Template::ChickenRabbitSystem => {
                let c = rng.gen_range(5..40);
                let r = rng.gen_range(5..40);
                let (h, l) = (c + r, 2 * c + 4 * r);
                let lead = pick(
                    rng,
                    &["a cage holds chickens and rabbits", "chickens and rabbits share a cage"],
                );
                if template == Template::ChickenRabbit {
                    (
                        format!("{lead} , there are {h} heads and {l} legs . how many chickens are there ?"),
                        vec![format!("2*x+4*({h}-x)={l}")],
                        vec![c],
                        vec![h, l],
                    )
                } else {
                    (
                        format!("{lead} , there are {h} heads and {l} legs . how many chickens and how many rabbits ?"),
                        vec![format!("x+y={h}"), format!("2*x+4*y={l}")],
                        vec![c, r],
                        vec![h, l],
                    )
                }
            }
            Template::SumDifference => {
                let b = rng.gen_range(5..60);
                let a = b + rng.gen_range(5..60);
                let (s, d) = (a + b, a - b);
                let lead = pick(rng, &["two numbers", "a pair of numbers"]);
                (
                    format!("{lead} add up to {s} and differ by {d} . find the larger and the smaller number ."),
                    vec![format!("x+y={s}"), format!("x-y={d}")],
                    vec![a, b],
                    vec![s, d],
                )
            }
            Template::FenceArea => {
                let p = rng.gen_range(5..30);
                let q = p + rng.gen_range(1..30);
                let (f, a) = (2 * (p + q), 2 * p * q);
                let lead = pick(rng, &["a pen against a wall", "a sheepfold along a wall"]);
                (
                    format!("{lead} uses {f} m of fence and has an area of {a} square m . how long is the side vertical to the wall ?"),
                    vec![format!("x*({f}-2*x)={a}")],
                    vec![q],
                    vec![f, a],
                )
            }
            Template::SquarePlusLinear => {
                let r = rng.gen_range(5..30);
                let s = r + rng.gen_range(5..30);
                let (b, c) = (s - r, r * s);
                (
                    format!("the square of a positive number plus {b} times the number is {c} . what is the number ?"),
                    vec![format!("x^2+{b}*x={c}")],
                    vec![r],
                    vec![b, c],
                )
            }
            Template::Linear => {
                let k = rng.gen_range(5..20);
                let v = rng.gen_range(5..50);
                let m = rng.gen_range(5..100);
                let t = k * v + m;
                let lead = pick(rng, &["a number multiplied by", "some number times"]);
                (
                    format!("{lead} {k} and then increased by {m} gives {t} . find the number ."),
                    vec![format!("{k}*x+{m}={t}")],
                    vec![v],
                    vec![k, m, t],
                )
            }
        };
        if !distinct(&quantities) {
            continue;
        }
        return RawRecord {
            id: id.to_string(),
            tokens: text.split_whitespace().map(String::from).collect(),
            equations,
            answers: answers.iter().map(|a| a.to_string()).collect(),
        };
    }
}

/// `n` problems cycling through `templates` in order, seeded.
pub fn synthetic_records(n: usize, seed: u64, templates: &[Template]) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| generate(templates[i % templates.len()], &format!("synth-{seed}-{i}"), &mut rng))
        .collect()
}
