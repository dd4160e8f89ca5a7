//! Condition embeddings E_S.

use std::time::Duration;

use rand::Rng;
use serde_json::json;

use crate::encoder::TEXT_DIM;
use crate::error::{Error, Result};
use crate::feature::FeatureTerm;
use crate::nn::{Graph, Mat, ParamId, ParamStore, Var};

/// Trainable lookup table: one `TEXT_DIM` row per vocabulary term.
#[derive(Debug, Clone, Copy)]
pub struct TextTable {
    pub table: ParamId,
}

impl TextTable {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let rows = FeatureTerm::vocabulary().len();
        Self {
            table: store.add("text.table", Mat::uniform(rows, TEXT_DIM, 1.0, rng)),
        }
    }

    pub fn embed(&self, g: &mut Graph, term: FeatureTerm) -> Var {
        let t = g.param(self.table);
        g.gather_rows(t, &[term.vocabulary_index()])
    }

    pub fn lookup(&self, store: &ParamStore, term: FeatureTerm) -> Vec<f64> {
        store.value(self.table).row(term.vocabulary_index()).to_vec()
    }
}

/// OpenAI-compatible embeddings endpoint.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteEmbedder {
    /// Reads `SDM_EMBED_ENDPOINT`, `SDM_EMBED_MODEL`, `SDM_EMBED_API_KEY`;
    /// `None` when no endpoint is configured.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("SDM_EMBED_ENDPOINT").ok().filter(|s| !s.is_empty())?;
        Some(Self {
            endpoint,
            model: std::env::var("SDM_EMBED_MODEL").unwrap_or_else(|_| "text-embedding".into()),
            api_key: std::env::var("SDM_EMBED_API_KEY").ok(),
            timeout: Duration::from_secs(30),
        })
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = json!({"model": self.model, "input": text, "dimensions": TEXT_DIM});
        let mut resp = req
            .send_json(&body)
            .map_err(|e| Error::Transport(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("unreadable embedding response: {e}")))?;
        if !status.is_success() {
            return Err(Error::Transport(format!(
                "embedding service returned {status}: {value}"
            )));
        }
        let vec: Vec<f64> = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| Error::Transport("response lacks data[0].embedding".into()))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| Error::Transport("non-numeric embedding".into()))
            })
            .collect::<Result<_>>()?;
        if vec.len() != TEXT_DIM {
            return Err(Error::Shape(format!(
                "remote embedding has {} dims, expected {TEXT_DIM}",
                vec.len()
            )));
        }
        Ok(vec)
    }
}

#[derive(Debug, Clone, Default)]
pub enum TextProvider {
    #[default]
    Local,
    Remote(RemoteEmbedder),
}

impl TextProvider {
    pub fn name(&self) -> &'static str {
        match self {
            TextProvider::Local => "local",
            TextProvider::Remote(_) => "remote",
        }
    }
}

/// Resolves `feature_type` through `provider`; the local provider reads
/// the table stored in `store`.
pub fn embed_text(
    feature_type: &str,
    provider: &TextProvider,
    table: &TextTable,
    store: &ParamStore,
) -> Result<Vec<f64>> {
    if feature_type.trim().is_empty() {
        return Err(Error::InvalidArgument("feature type must not be empty".into()));
    }
    match provider {
        TextProvider::Local => Ok(table.lookup(store, FeatureTerm::parse(feature_type)?)),
        TextProvider::Remote(r) => r.embed(feature_type),
    }
}
