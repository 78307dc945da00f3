use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::llm::{http_client, post_json_with_retries};
use crate::state::{InstructionSet, MetaInfo, Query, StateMemory};

/// Width of every state embedding.
pub const EMBED_DIM: usize = 1536;

pub trait EmbeddingProvider: Send + Sync {
    /// Returns exactly [`EMBED_DIM`] values.
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Sparse view of a dense vector: the nonzero entries in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    dim: usize,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(v: &[f64]) -> Self {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                idx.push(i as u32);
                val.push(x);
            }
        }
        Self { dim: v.len(), idx, val }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| (i as usize, v))
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedding;

impl HashEmbedding {
    pub fn embed_text(text: &str) -> Vec<f64> {
        let mut v = vec![0.0; EMBED_DIM];
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(token.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % EMBED_DIM as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        Ok(Self::embed_text(text))
    }
}

/// Client for an embeddings endpoint answering `{data: [{embedding: [...]}]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedding {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpEmbedding {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout_secs: f64,
        max_retries: u32,
    ) -> Result<Self> {
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            max_retries,
            client: http_client(timeout_secs)?,
        })
    }
}

impl EmbeddingProvider for HttpEmbedding {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let body = json!({ "model": self.model, "input": text });
        let bearer = self.api_key.as_ref().map(|k| format!("Bearer {k}"));
        let key = bearer.as_deref().map(|b| ("Authorization", b));
        let reply = post_json_with_retries(&self.client, &self.endpoint, key, &body, self.max_retries)?;
        let values = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::BackendUnavailable("embedding response has no data[0].embedding".into()))?;
        let v: Vec<f64> = values.iter().filter_map(Value::as_f64).collect();
        if v.len() != EMBED_DIM || v.len() != values.len() {
            return Err(Error::Shape { expected: EMBED_DIM, actual: values.len() });
        }
        Ok(v)
    }
}

/// The fixed text block the controller embeds.
pub fn serialize_state(query: &Query, d: &InstructionSet, mem: &StateMemory, meta: &MetaInfo) -> String {
    let r = mem.render();
    format!(
        "{}\n\nQuestion: {}\n\nInstruction history:\n{}\n\nCode history:\n{}\n\nVariables:\n{}\n\nFeedback history:\n{}\n\nCandidate instructions:\n{}",
        meta.summary(),
        query.text(),
        r.instruction_history,
        r.code_history,
        r.variables,
        r.feedback_history,
        d.to_lines(),
    )
}

pub fn embed_state(
    query: &Query,
    d: &InstructionSet,
    mem: &StateMemory,
    meta: &MetaInfo,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<f64>> {
    let v = provider.embed(&serialize_state(query, d, mem, meta))?;
    if v.len() != EMBED_DIM {
        return Err(Error::Shape { expected: EMBED_DIM, actual: v.len() });
    }
    Ok(v)
}
