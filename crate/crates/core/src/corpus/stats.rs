use std::fmt;

use serde::Serialize;

use crate::uet::{self, TargetSymbol};

use super::ProblemInstance;

/// Corpus summary in the column layout of the usual dataset table.
///
/// Equation length counts infix tokens of the gold equations, parentheses
/// included and `;` excluded. Operator counts include `=` and `;`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    /// Records read from the file, including ones rejected at load.
    pub count: usize,
    /// Records that produced a valid instance; averages are over these.
    pub usable: usize,
    pub avg_equation_length: f64,
    pub avg_slots: f64,
    pub avg_constants: f64,
    pub avg_operators: f64,
}

fn infix_token_count(s: &str) -> usize {
    let mut n = 0;
    let mut in_word = false;
    for ch in s.chars() {
        let word = ch.is_ascii_alphanumeric() || ch == '.' || ch == '%' || ch == '_';
        if word {
            if !in_word {
                n += 1;
            }
        } else if !ch.is_whitespace() {
            n += 1;
        }
        in_word = word;
    }
    n
}

pub fn dataset_stats(corpus: &[ProblemInstance], records: usize) -> DatasetStats {
    let usable = corpus.len();
    let mut el = 0usize;
    let mut slots = 0usize;
    let mut consts = 0usize;
    let mut ops = 0usize;
    for p in corpus {
        if let Ok(tree) = uet::from_prefix(&p.gold_prefix) {
            el += uet::to_infix_symbolic(&tree)
                .iter()
                .map(|s| infix_token_count(s))
                .sum::<usize>();
        }
        slots += p.slots.len();
        consts += p
            .gold_prefix
            .iter()
            .filter(|s| matches!(s, TargetSymbol::Const(_)))
            .count();
        ops += p.gold_prefix.iter().filter(|s| s.is_operator()).count();
    }
    let mean = |x: usize| if usable == 0 { 0.0 } else { x as f64 / usable as f64 };
    DatasetStats {
        count: records,
        usable,
        avg_equation_length: mean(el),
        avg_slots: mean(slots),
        avg_constants: mean(consts),
        avg_operators: mean(ops),
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "| # Num | # Usable | # Avg EL | # Avg SNI | # Avg Constants | # Avg Ops |"
        )?;
        writeln!(
            f,
            "|-------|----------|----------|-----------|-----------------|-----------|"
        )?;
        write!(
            f,
            "| {} | {} | {:.2} | {:.2} | {:.2} | {:.2} |",
            self.count, self.usable, self.avg_equation_length, self.avg_slots, self.avg_constants, self.avg_operators
        )
    }
}
