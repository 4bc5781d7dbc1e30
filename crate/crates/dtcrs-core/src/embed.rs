//! Embedding providers.
//!
//! Embeddings are L2-normalized at the provider boundary so cosine
//! similarity reduces to a dot product downstream. The test backend is a
//! seeded random projection of token-hash counts: texts sharing tokens get
//! geometrically close vectors, so clustering tests exercise real structure.

use crate::error::{Error, Result};
use crate::model::EmbeddingVector;
use crate::tokenizer::{Tokenizer, UnicodeTokenizer};
use serde_json::{json, Value};
use std::time::Duration;
use ureq::Agent;

/// Texts with their same-order embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    pub texts: Vec<String>,
    pub vectors: Vec<EmbeddingVector>,
}

impl EmbeddingBatch {
    pub fn new(texts: Vec<String>, vectors: Vec<EmbeddingVector>) -> Result<Self> {
        if texts.len() != vectors.len() {
            return Err(Error::ProviderContract(format!(
                "{} texts but {} vectors",
                texts.len(),
                vectors.len()
            )));
        }
        let mut dim = None;
        for vector in &vectors {
            match dim {
                None => dim = Some(vector.dim()),
                Some(d) if d != vector.dim() => {
                    return Err(Error::ProviderContract(format!(
                        "embedding dim {} differs from {d} within one batch",
                        vector.dim()
                    )));
                }
                _ => {}
            }
        }
        Ok(EmbeddingBatch { texts, vectors })
    }

    pub fn empty() -> Self {
        EmbeddingBatch {
            texts: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(|v| v.dim())
    }
}

/// Text-to-vector backend. `embed` is reentrant; identical text yields an
/// identical vector within one provider instance.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for byte in bytes {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Map a u64 to a uniform value in [-1, 1).
fn to_signed_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
}

/// Deterministic test embedder.
///
/// Construction (mirrored by the oracle test below): lowercase the text,
/// tokenize with [`UnicodeTokenizer`], and for each token with FNV-1a hash
/// `h` add the direction whose component `j` is
/// `to_signed_unit(splitmix64(seed ^ h ^ j*GOLDEN))`; finally L2-normalize.
#[derive(Debug, Clone)]
pub struct TestEmbedder {
    seed: u64,
    dim: usize,
}

impl TestEmbedder {
    pub fn new(seed: u64) -> Self {
        TestEmbedder { seed, dim: 16 }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let lowered = text.to_lowercase();
        let tokenizer = UnicodeTokenizer;
        let spans = tokenizer.spans(&lowered);
        if spans.is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let mut values = vec![0.0f64; self.dim];
        for &(start, end) in &spans {
            let token_hash = fnv1a64(lowered[start..end].as_bytes());
            for (j, value) in values.iter_mut().enumerate() {
                let bits = splitmix64(self.seed ^ token_hash ^ (j as u64).wrapping_mul(GOLDEN));
                *value += to_signed_unit(bits);
            }
        }
        Ok(EmbeddingVector::new(values)?.normalized())
    }
}

impl EmbeddingProvider for TestEmbedder {
    fn name(&self) -> &str {
        "test"
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch> {
        if texts.is_empty() {
            return Err(Error::invalid("embed requires at least one text"));
        }
        let vectors = texts
            .iter()
            .map(|t| self.embed_one(t))
            .collect::<Result<Vec<_>>>()?;
        EmbeddingBatch::new(texts.to_vec(), vectors)
    }
}

/// HTTP embedding backend: posts `{"texts": [...]}` and expects
/// `{"vectors": [[...], ...]}`.
pub struct HttpEmbedder {
    url: String,
    api_key: Option<String>,
    agent: Agent,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpEmbedder {
            url: url.into(),
            api_key,
            agent,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        "http"
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch> {
        if texts.is_empty() {
            return Err(Error::invalid("embed requires at least one text"));
        }
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&json!({ "texts": texts }))
            .map_err(|e| Error::Transport(format!("embedding request failed: {e}")))?;
        let body: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("embedding reply unreadable: {e}")))?;
        let raw = body
            .get("vectors")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::ProviderContract("reply missing `vectors` array".into()))?;
        let mut vectors = Vec::with_capacity(raw.len());
        for row in raw {
            let values = row
                .as_array()
                .ok_or_else(|| Error::ProviderContract("vector row is not an array".into()))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| {
                    Error::ProviderContract("vector component is not a number".into())
                }))
                .collect::<Result<Vec<f64>>>()?;
            vectors.push(EmbeddingVector::new(values)?.normalized());
        }
        EmbeddingBatch::new(texts.to_vec(), vectors)
    }
}
