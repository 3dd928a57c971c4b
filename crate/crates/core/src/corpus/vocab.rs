use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ProblemInstance;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const NUM_TOKEN: &str = "NUM";

const SPECIALS: [&str; 3] = [PAD_TOKEN, UNK_TOKEN, NUM_TOKEN];

/// Source-side word vocabulary with `PAD`, `UNK` and `NUM` at indices 0..3.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const NUM: usize = 2;

    pub fn specials_only() -> Self {
        Self::from_tokens(SPECIALS.iter().map(|s| s.to_string()).collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t)).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Counts words across the corpus; words seen fewer than `min_count` times
/// fall back to `UNK`. Ordering is count descending, then lexicographic.
pub fn build_vocab(corpus: &[ProblemInstance], min_count: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for p in corpus {
        for t in &p.tokens {
            if !SPECIALS.contains(&t.as_str()) {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens)
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.len() < SPECIALS.len() || tokens[..3] != SPECIALS.map(String::from) {
            return Err(serde::de::Error::custom(
                "vocabulary must start with the special tokens",
            ));
        }
        Ok(Vocabulary::from_tokens(tokens))
    }
}
