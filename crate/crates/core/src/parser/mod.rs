//! Natural-language commands to [`StructuredCommand`] JSON.
//!
//! Two engines produce the same output type: an LLM driven by a five-step
//! reasoning prompt, and a deterministic grammar that works offline.

pub mod corpus;
pub mod grammar;
pub mod llm;
pub mod prompt;
pub mod schema;

use serde::{Deserialize, Serialize};

pub use corpus::{
    builtin_corpus, evaluate_corpus, load_corpus, matches_gold, parse_corpus, CorpusEntry, CorpusReport, EntryOutcome,
    Tier,
};
pub use grammar::parse_with_grammar;
pub use llm::{extract_first_json_object, parse_with_backend, parse_with_llm, ChatBackend, ChatMessage, LlmClient};
pub use prompt::{build_cot_prompt, TEMPLATE_VERSION};
pub use schema::{validate_schema, Axis, CommandEntry, FeatureRef, Operation, Sign, StructuredCommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Llm,
    Grammar,
}

impl std::str::FromStr for Engine {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "llm" => Ok(Engine::Llm),
            "grammar" => Ok(Engine::Grammar),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown engine '{other}' (expected llm or grammar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The text did not fit the grammar.
    Unparseable,
    /// Model output stayed schema-invalid after the repair attempt.
    SchemaInvalid,
    /// Endpoint unreachable, timed out or answered with an error.
    Transport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub kind: FailureKind,
    pub reason: String,
    /// 1-based clause index (grammar engine).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clause: Option<usize>,
    /// Character offset into the original text (grammar engine).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseResult {
    pub source: Engine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<StructuredCommand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<ParseFailure>,
    /// Every raw model reply, kept for audit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_output: Vec<String>,
}

impl ParseResult {
    pub fn is_success(&self) -> bool {
        self.structured.is_some()
    }

    pub(crate) fn success(source: Engine, command: StructuredCommand, raw_output: Vec<String>) -> Self {
        Self {
            source,
            structured: Some(command),
            failure: None,
            raw_output,
        }
    }

    pub(crate) fn failed(source: Engine, failure: ParseFailure, raw_output: Vec<String>) -> Self {
        Self {
            source,
            structured: None,
            failure: Some(failure),
            raw_output,
        }
    }
}
