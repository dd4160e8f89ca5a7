use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

use super::schema::validate_schema;
use super::ParseResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Simple,
    Complex,
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub text: String,
    pub gold: Value,
    pub tier: Tier,
    pub grammar_supported: bool,
}

const BUILTIN: &str = include_str!("../../data/commands_v1.jsonl");

pub fn parse_corpus(jsonl: &str) -> Result<Vec<CorpusEntry>> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse(format!("corpus line {}: {e}", i + 1))))
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusEntry>> {
    parse_corpus(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// The bundled 40-command corpus (10 simple, 30 complex).
pub fn builtin_corpus() -> Vec<CorpusEntry> {
    parse_corpus(BUILTIN).expect("bundled corpus is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryOutcome {
    pub index: usize,
    pub text: String,
    pub tier: Tier,
    pub grammar_supported: bool,
    pub correct: bool,
    pub result: ParseResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub total: usize,
    pub correct: usize,
    pub supported_total: usize,
    pub supported_correct: usize,
    pub simple_correct: usize,
    pub complex_correct: usize,
    pub entries: Vec<EntryOutcome>,
}

impl CorpusReport {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total.max(1) as f64
    }

    pub fn supported_accuracy(&self) -> f64 {
        self.supported_correct as f64 / self.supported_total.max(1) as f64
    }
}

/// Does `result` equal the gold command exactly? Gold is compared after
/// validation so `3` and `3.0` are the same distance.
pub fn matches_gold(result: &ParseResult, gold: &Value) -> bool {
    match (&result.structured, validate_schema(gold)) {
        (Some(got), Ok(want)) => *got == want,
        _ => false,
    }
}

pub fn evaluate_corpus(entries: &[CorpusEntry], mut parse: impl FnMut(&str) -> ParseResult) -> CorpusReport {
    let outcomes: Vec<EntryOutcome> = entries
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let result = parse(&e.text);
            EntryOutcome {
                index,
                text: e.text.clone(),
                tier: e.tier,
                grammar_supported: e.grammar_supported,
                correct: matches_gold(&result, &e.gold),
                result,
            }
        })
        .collect();
    let count = |f: &dyn Fn(&EntryOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    CorpusReport {
        total: outcomes.len(),
        correct: count(&|o| o.correct),
        supported_total: count(&|o| o.grammar_supported),
        supported_correct: count(&|o| o.grammar_supported && o.correct),
        simple_correct: count(&|o| o.tier == Tier::Simple && o.correct),
        complex_correct: count(&|o| o.tier == Tier::Complex && o.correct),
        entries: outcomes,
    }
}
