use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::uet::Decimal;

use super::{map_equation, number_map, parse_number_literal, unknowns_used, CorpusError, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Math23k,
    Hmwp,
    Alg514,
    /// Output of `preprocess`.
    Preprocessed,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "math23k" => Ok(DatasetFormat::Math23k),
            "hmwp" => Ok(DatasetFormat::Hmwp),
            "alg514" => Ok(DatasetFormat::Alg514),
            "preprocessed" => Ok(DatasetFormat::Preprocessed),
            other => Err(format!("unknown dataset format `{other}`")),
        }
    }
}

/// A dataset record before number mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub equations: Vec<String>,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: usize,
    pub instances: Vec<ProblemInstance>,
    /// `(record id, reason)` for every record that did not make it.
    pub rejected: Vec<(String, String)>,
}

fn field<'a>(obj: &'a Value, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| obj.get(*n)).filter(|v| !v.is_null())
}

fn as_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn string_list(v: Option<&Value>, split: &[char]) -> Vec<String> {
    match v {
        None => vec![],
        Some(Value::Array(items)) => items.iter().map(as_text).collect(),
        Some(other) => as_text(other)
            .split(split)
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    }
}

/// Whitespace split that also peels `$`, brackets, quotes and sentence
/// punctuation off words, as needed for unsegmented English text.
fn english_tokens(text: &str) -> Vec<String> {
    const LEAD: &[char] = &['$', '(', '"', '\''];
    const TRAIL: &[char] = &[',', '.', '?', '!', ';', ':', ')', '"', '\''];
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut w = word;
        while let Some(c) = w.chars().next().filter(|c| LEAD.contains(c)) {
            out.push(c.to_string());
            w = &w[c.len_utf8()..];
        }
        let mut tail = Vec::new();
        while let Some(c) = w.chars().last().filter(|c| TRAIL.contains(c)) {
            tail.push(c.to_string());
            w = &w[..w.len() - c.len_utf8()];
        }
        if !w.is_empty() {
            out.push(w.to_string());
        }
        out.extend(tail.into_iter().rev());
    }
    out
}

fn record_from_value(v: &Value, index: usize, format: DatasetFormat) -> RawRecord {
    let id = field(v, &["id", "iIndex", "index"])
        .map(as_text)
        .unwrap_or_else(|| index.to_string());
    let text = match format {
        DatasetFormat::Alg514 => field(v, &["sQuestion", "segmented_text", "text", "original_text"]),
        _ => field(v, &["segmented_text", "text", "original_text", "sQuestion"]),
    }
    .map(as_text)
    .unwrap_or_default();
    let tokens = match format {
        DatasetFormat::Alg514 => english_tokens(&text),
        _ => text.split_whitespace().map(String::from).collect(),
    };
    let equations = string_list(field(v, &["equation", "equations", "lEquations"]), &[';']);
    let answers = string_list(field(v, &["ans", "answer", "answers", "lSolutions"]), &[';', ',']);
    RawRecord {
        id,
        tokens,
        equations,
        answers,
    }
}

/// Reads a raw dataset: concatenated JSON objects (the Math23K layout),
/// line-delimited objects, or a top-level array.
pub fn load_raw(path: &Path, format: DatasetFormat) -> Result<Vec<RawRecord>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for value in serde_json::Deserializer::from_str(&text).into_iter::<Value>() {
        match value? {
            Value::Array(items) => {
                for item in items {
                    let idx = out.len();
                    out.push(record_from_value(&item, idx, format));
                }
            }
            obj => {
                let idx = out.len();
                out.push(record_from_value(&obj, idx, format));
            }
        }
    }
    Ok(out)
}

/// Renames free variables to `x`, `y` in first-occurrence order unless the
/// equations already only use `x` and `y`.
fn normalize_unknowns(equations: &[String]) -> Result<Vec<String>, CorpusError> {
    let mut names: Vec<String> = Vec::new();
    for eq in equations {
        for ident in identifiers(eq) {
            if !names.contains(&ident) {
                names.push(ident);
            }
        }
    }
    if names.iter().all(|n| n == "x" || n == "y") {
        return Ok(equations.to_vec());
    }
    if names.len() > 2 {
        return Err(CorpusError::TooManyUnknowns(names));
    }
    let target = ["x", "y"];
    Ok(equations
        .iter()
        .map(|eq| {
            let mut out = String::with_capacity(eq.len());
            let mut chars = eq.char_indices().peekable();
            while let Some((start, ch)) = chars.next() {
                if ch.is_ascii_alphabetic() || ch == '_' {
                    let mut end = start + ch.len_utf8();
                    while let Some(&(i, c)) = chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            end = i + c.len_utf8();
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    let word = &eq[start..end];
                    match names.iter().position(|n| n == word) {
                        Some(i) => out.push_str(target[i]),
                        None => out.push_str(word),
                    }
                } else {
                    out.push(ch);
                }
            }
            out
        })
        .collect())
}

fn identifiers(eq: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_number = false;
    for ch in eq.chars() {
        if cur.is_empty() && (ch.is_ascii_digit() || ch == '.') {
            in_number = true;
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' || (!cur.is_empty() && ch.is_ascii_digit()) {
            cur.push(ch);
            in_number = false;
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            in_number = in_number && (ch.is_ascii_digit() || ch == '.');
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_answer(s: &str) -> Option<f64> {
    let s = s.trim();
    let s = s.split_once('=').map(|(_, r)| r.trim()).unwrap_or(s);
    if let Some(rest) = s.strip_prefix('-') {
        return parse_answer(rest).map(|v| -v);
    }
    parse_number_literal(s)
        .map(|n| n.value.to_f64())
        .or_else(|| s.parse::<f64>().ok())
        .filter(|v| v.is_finite())
}

fn build_one(r: &RawRecord, constants: &[Decimal]) -> Result<ProblemInstance, String> {
    if r.equations.is_empty() {
        return Err("no equation".into());
    }
    let answers: Vec<f64> = r
        .answers
        .iter()
        .map(|a| parse_answer(a).ok_or_else(|| format!("unparseable answer `{a}`")))
        .collect::<Result<_, _>>()?;
    if answers.is_empty() {
        return Err("no answer".into());
    }
    let equations = normalize_unknowns(&r.equations).map_err(|e| e.to_string())?;
    let (tokens, slots) = number_map(&r.tokens);
    let gold_prefix = map_equation(&equations, &slots, constants).map_err(|e| e.to_string())?;
    let unknown_count = unknowns_used(&gold_prefix);
    if unknown_count == 0 {
        return Err(CorpusError::NoUnknown.to_string());
    }
    let inst = ProblemInstance {
        id: r.id.clone(),
        tokens,
        slots,
        gold_prefix,
        gold_answers: answers,
        unknown_count,
    };
    inst.validate(constants).map_err(|e| e.to_string())?;
    Ok(inst)
}

/// Number-maps every record and converts its gold equations. Records that
/// fail, including ones needing a constant outside `constants`, are
/// reported rather than kept.
pub fn build_instances(records: &[RawRecord], constants: &[Decimal]) -> LoadReport {
    let mut report = LoadReport {
        records: records.len(),
        ..LoadReport::default()
    };
    for r in records {
        match build_one(r, constants) {
            Ok(inst) => report.instances.push(inst),
            Err(reason) => report.rejected.push((r.id.clone(), reason)),
        }
    }
    report
}

#[derive(Serialize, Deserialize)]
struct PreprocessedHeader {
    sau_preprocessed: u32,
    constants: Vec<Decimal>,
    records: usize,
}

pub fn write_preprocessed(path: &Path, constants: &[Decimal], report: &LoadReport) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = PreprocessedHeader {
        sau_preprocessed: 1,
        constants: constants.to_vec(),
        records: report.records,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for inst in &report.instances {
        serde_json::to_writer(&mut w, inst)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Returns `(constant list, instances, raw record count)`.
pub fn read_preprocessed(path: &Path) -> Result<(Vec<Decimal>, Vec<ProblemInstance>, usize), CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines.next().ok_or(CorpusError::BadRecord {
        index: 0,
        reason: "empty preprocessed file".into(),
    })??;
    let header: PreprocessedHeader = serde_json::from_str(&header_line)?;
    let mut instances = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: ProblemInstance = serde_json::from_str(&line).map_err(|e| CorpusError::BadRecord {
            index: i + 1,
            reason: e.to_string(),
        })?;
        instances.push(inst);
    }
    Ok((header.constants, instances, header.records))
}
