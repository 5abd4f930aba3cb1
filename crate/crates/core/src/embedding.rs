//! Text embeddings and an exact cosine-similarity vector store.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error("vector must have at least one component")]
    EmptyVector,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("vector store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed store file: {0}")]
    Malformed(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// A finite, non-empty vector of `f64` components.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self, IndexError> {
        if components.is_empty() {
            return Err(IndexError::EmptyVector);
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl<'de> Deserialize<'de> for Vector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        Vector::new(raw).map_err(serde::de::Error::custom)
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64, IndexError> {
    if a.dim() != b.dim() {
        return Err(IndexError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbedderKind {
    Deterministic,
    Remote,
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vector, IndexError>;
    fn dim(&self) -> usize;
    fn kind(&self) -> EmbedderKind;
}

/// Feature-hashed character-trigram counts, L2-normalized.
///
/// Text is lowercased, whitespace runs collapse to one space, and the result
/// is padded with a space on each side before windowing. Each trigram is
/// hashed with 64-bit FNV-1a into `dim` buckets.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Normalized character sequence the trigram windows slide over.
pub fn trigram_chars(text: &str) -> Vec<char> {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    std::iter::once(' ')
        .chain(collapsed.chars())
        .chain(std::iter::once(' '))
        .collect()
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<Vector, IndexError> {
        if text.trim().is_empty() {
            return Err(IndexError::EmptyText);
        }
        let chars = trigram_chars(text);
        let mut counts = vec![0.0f64; self.dim];
        let mut buf = String::with_capacity(12);
        for window in chars.windows(3) {
            buf.clear();
            buf.extend(window);
            let bucket = (fnv1a(buf.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in &mut counts {
            *c /= norm;
        }
        Vector::new(counts)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EmbedderKind {
        EmbedderKind::Deterministic
    }
}

/// OpenAI-compatible `POST {base}/embeddings` client.
pub struct RemoteEmbedder {
    base_url: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(base_url: String, api_key: Option<String>, model: String, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base_url,
            api_key,
            model,
            dim,
            agent,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Vector, IndexError> {
        #[derive(Deserialize)]
        struct Item {
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Reply {
            data: Vec<Item>,
        }
        if text.trim().is_empty() {
            return Err(IndexError::EmptyText);
        }
        let url = format!("{}/embeddings", self.base_url.trim_end_matches('/'));
        let mut call = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let reply: Reply = call
            .send_json(serde_json::json!({ "model": self.model, "input": text }))
            .map_err(|e| IndexError::BackendUnavailable(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| IndexError::BackendUnavailable(e.to_string()))?;
        let item = reply
            .data
            .into_iter()
            .next()
            .ok_or_else(|| IndexError::BackendUnavailable("empty embedding reply".into()))?;
        let v = Vector::new(item.embedding)?;
        if v.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                left: v.dim(),
                right: self.dim,
            });
        }
        Ok(v)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EmbedderKind {
        EmbedderKind::Remote
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
    pub vector: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    pub payload_text: String,
    pub payload_meta: BTreeMap<String, String>,
}

/// Exact brute-force store. Built single-threaded, then shared read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    entries: Vec<StoreEntry>,
    by_id: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct StoreFile {
    dim: usize,
    entries: Vec<StoreEntry>,
}

impl VectorStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&StoreEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn add_entry(
        &mut self,
        id: impl Into<String>,
        text: impl Into<String>,
        meta: BTreeMap<String, String>,
        embedder: &dyn Embedder,
    ) -> Result<(), IndexError> {
        let id = id.into();
        if self.by_id.contains_key(&id) {
            return Err(IndexError::DuplicateId(id));
        }
        let text = text.into();
        let vector = embedder.embed(&text)?;
        self.insert(StoreEntry {
            id,
            text,
            meta,
            vector,
        })
    }

    /// Adds a pre-computed vector.
    pub fn insert(&mut self, entry: StoreEntry) -> Result<(), IndexError> {
        if entry.vector.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                left: entry.vector.dim(),
                right: self.dim,
            });
        }
        if entry.vector.norm() == 0.0 {
            return Err(IndexError::ZeroVector);
        }
        if self.by_id.contains_key(&entry.id) {
            return Err(IndexError::DuplicateId(entry.id));
        }
        self.by_id.insert(entry.id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    /// Top `min(k, len)` entries by cosine similarity; ties keep insertion order.
    pub fn top_k(&self, query: &Vector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::EmptyStore);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                left: query.dim(),
                right: self.dim,
            });
        }
        let mut scored = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| cosine_similarity(query, &e.vector).map(|s| (i, s)))
            .collect::<Result<Vec<_>, _>>()?;
        // `sort_by` is stable, so equal scores stay in insertion order.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, score)| {
                let e = &self.entries[i];
                SearchHit {
                    id: e.id.clone(),
                    score,
                    payload_text: e.text.clone(),
                    payload_meta: e.meta.clone(),
                }
            })
            .collect())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&StoreFile {
            dim: self.dim,
            entries: self.entries.clone(),
        })
        .expect("store serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, IndexError> {
        let file: StoreFile =
            serde_json::from_str(text).map_err(|e| IndexError::Malformed(e.to_string()))?;
        if file.dim == 0 {
            return Err(IndexError::Malformed("dim must be positive".into()));
        }
        let mut store = Self::new(file.dim);
        for entry in file.entries {
            store.insert(entry)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::write(path, self.to_json_string()).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let text = std::fs::read_to_string(path).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }
}
