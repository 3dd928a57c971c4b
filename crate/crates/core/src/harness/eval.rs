use std::fmt;

use serde::{Deserialize, Serialize};

use super::{HarnessError, TrainConfig, TrainedModel};
use crate::corpus::ProblemInstance;
use crate::decoder::{DecodeMode, DecodeOutput};
use crate::eqsolve::{check_answer, polynomial_degree, solve_tree, substitute, SolveStatus};
use crate::nnmath::Graph;
use crate::uet::{format_prefix, from_prefix, to_infix, Decimal, Unknown};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub beam: usize,
    pub max_nodes: usize,
    pub tolerance: f64,
    /// Per-step top-k symbols in each record; 0 disables.
    pub top_k: usize,
}

impl EvalOptions {
    pub fn from_config(c: &TrainConfig) -> Self {
        EvalOptions {
            beam: c.beam,
            max_nodes: c.max_nodes,
            tolerance: c.answer_tolerance,
            top_k: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemType {
    #[serde(rename = "linear (One-VAR)")]
    LinearOneVar,
    #[serde(rename = "linear (Two-VAR)")]
    LinearTwoVar,
    #[serde(rename = "non-linear (One-VAR)")]
    NonLinearOneVar,
    #[serde(rename = "non-linear (Two-VAR)")]
    NonLinearTwoVar,
}

impl ProblemType {
    pub const ALL: [ProblemType; 4] = [
        ProblemType::LinearOneVar,
        ProblemType::LinearTwoVar,
        ProblemType::NonLinearOneVar,
        ProblemType::NonLinearTwoVar,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ProblemType::LinearOneVar => "linear (One-VAR)",
            ProblemType::LinearTwoVar => "linear (Two-VAR)",
            ProblemType::NonLinearOneVar => "non-linear (One-VAR)",
            ProblemType::NonLinearTwoVar => "non-linear (Two-VAR)",
        }
    }
}

/// Type of a problem from its unknown count and the degree of its gold equations.
pub fn classify(p: &ProblemInstance) -> ProblemType {
    let linear = from_prefix(&p.gold_prefix)
        .ok()
        .and_then(|t| substitute(&t, &p.slot_values()).ok())
        .and_then(|eqs| polynomial_degree(&eqs))
        .is_some_and(|d| d <= 1);
    match (p.unknown_count >= 2, linear) {
        (false, true) => ProblemType::LinearOneVar,
        (true, true) => ProblemType::LinearTwoVar,
        (false, false) => ProblemType::NonLinearOneVar,
        (true, false) => ProblemType::NonLinearTwoVar,
    }
}

/// Tree-size bucket label for a prefix length.
pub fn size_bucket(len: usize) -> &'static str {
    match len {
        0..=3 => "3-",
        4..=5 => "5",
        6..=7 => "7",
        8..=9 => "9",
        10..=11 => "11",
        _ => "13+",
    }
}

pub const SIZE_BUCKETS: [&str; 6] = ["3-", "5", "7", "9", "11", "13+"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub prefix: String,
    pub infix: Vec<String>,
    pub gold_prefix: String,
    pub gold_answers: Vec<f64>,
    pub status: Option<SolveStatus>,
    pub solutions: Vec<Vec<f64>>,
    pub correct: bool,
    pub gold_size: usize,
    pub problem_type: ProblemType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_k: Vec<Vec<(String, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub records: Vec<EvalRecord>,
}

fn decode_one(
    m: &TrainedModel,
    p: &ProblemInstance,
    opts: &EvalOptions,
) -> Result<DecodeOutput, crate::decoder::DecoderError> {
    let mut g = Graph::new(&m.model.store);
    let ids = m.vocab.encode(&p.tokens);
    let problem = m.model.prepare(&mut g, p, &ids, &m.constants, 0.0)?;
    let mode = if opts.beam <= 1 {
        DecodeMode::Greedy
    } else {
        DecodeMode::Beam(opts.beam)
    };
    m.model.decode(&mut g, &problem, mode, opts.max_nodes)
}

fn top_k(out: &DecodeOutput, p: &ProblemInstance, constants: &[Decimal], k: usize) -> Vec<Vec<(String, f64)>> {
    let target = crate::corpus::target_vocab(p, constants);
    out.state
        .distributions
        .iter()
        .map(|d| {
            let mut idx: Vec<usize> = (0..d.len()).collect();
            idx.sort_by(|&a, &b| {
                d[b].partial_cmp(&d[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            idx.into_iter().take(k).map(|i| (target[i].to_string(), d[i])).collect()
        })
        .collect()
}

/// Decodes, solves and grades one problem; failures become incorrect records.
pub fn evaluate_one(m: &TrainedModel, p: &ProblemInstance, opts: &EvalOptions) -> EvalRecord {
    let mut record = EvalRecord {
        id: p.id.clone(),
        prefix: String::new(),
        infix: Vec::new(),
        gold_prefix: format_prefix(&p.gold_prefix),
        gold_answers: p.gold_answers.clone(),
        status: None,
        solutions: Vec::new(),
        correct: false,
        gold_size: p.gold_prefix.len(),
        problem_type: classify(p),
        error: None,
        top_k: Vec::new(),
    };
    let out = match decode_one(m, p, opts) {
        Ok(out) => out,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    record.prefix = format_prefix(&out.prefix);
    if opts.top_k > 0 {
        record.top_k = top_k(&out, p, &m.constants, opts.top_k);
    }
    let tree = match from_prefix(&out.prefix) {
        Ok(t) => t,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let slots = p.slot_values();
    record.infix = to_infix(&tree, &slots).unwrap_or_default();
    let unknowns = &Unknown::ALL[..p.unknown_count.clamp(1, 2)];
    let sol = solve_tree(&tree, &slots, unknowns);
    record.correct = check_answer(&sol, &p.gold_answers, opts.tolerance);
    record.status = Some(sol.status);
    record.solutions = sol.solutions;
    record
}

/// Answer accuracy over `instances`; deterministic for fixed parameters.
pub fn evaluate(m: &TrainedModel, instances: &[ProblemInstance], opts: &EvalOptions) -> EvalReport {
    EvalReport::from_records(instances.iter().map(|p| evaluate_one(m, p, opts)).collect())
}

impl EvalReport {
    /// Accuracy is `correct / total`, and 0 for an empty set.
    pub fn from_records(records: Vec<EvalRecord>) -> Self {
        let correct = records.iter().filter(|r| r.correct).count();
        EvalReport {
            accuracy: if records.is_empty() {
                0.0
            } else {
                correct as f64 / records.len() as f64
            },
            correct,
            total: records.len(),
            records,
        }
    }
}

/// As [`evaluate`], refusing datasets preprocessed with other constants.
pub fn evaluate_dataset(
    m: &TrainedModel,
    dataset_constants: &[Decimal],
    instances: &[ProblemInstance],
    opts: &EvalOptions,
) -> Result<EvalReport, HarnessError> {
    if dataset_constants != m.constants.as_slice() {
        let show = |c: &[Decimal]| c.iter().map(|d| d.canonical()).collect::<Vec<_>>().join(", ");
        return Err(HarnessError::VocabularyMismatch(format!(
            "model constants [{}], dataset constants [{}]",
            show(&m.constants),
            show(dataset_constants)
        )));
    }
    Ok(evaluate(m, instances, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub count: usize,
    pub correct: usize,
    /// `None` for an empty bucket.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub by_size: Vec<Bucket>,
    pub by_type: Vec<Bucket>,
}

fn bucket<'a>(label: &str, records: impl Iterator<Item = &'a EvalRecord>) -> Bucket {
    let (mut count, mut correct) = (0, 0);
    for r in records {
        count += 1;
        correct += r.correct as usize;
    }
    Bucket {
        label: label.to_string(),
        count,
        correct,
        accuracy: (count > 0).then(|| correct as f64 / count as f64),
    }
}

/// Accuracy by gold tree size and by problem type.
pub fn bucket_report(records: &[EvalRecord]) -> BucketReport {
    BucketReport {
        by_size: SIZE_BUCKETS
            .iter()
            .map(|&l| bucket(l, records.iter().filter(|r| size_bucket(r.gold_size) == l)))
            .collect(),
        by_type: ProblemType::ALL
            .iter()
            .map(|&t| bucket(t.label(), records.iter().filter(|r| r.problem_type == t)))
            .collect(),
    }
}

impl fmt::Display for BucketReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (title, rows) in [("tree size", &self.by_size), ("problem type", &self.by_type)] {
            writeln!(f, "{title:<22} {:>6} {:>8}", "count", "accuracy")?;
            for b in rows {
                let acc = b.accuracy.map_or("n/a".to_string(), |a| format!("{:.2}%", 100.0 * a));
                writeln!(f, "{:<22} {:>6} {:>8}", b.label, b.count, acc)?;
            }
        }
        Ok(())
    }
}
