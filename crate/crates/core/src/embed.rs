//! Sentence-embedding retrieval: the provider contract, a deterministic
//! test embedder, and an exact cosine nearest-neighbour index.
//!
//! Retrieval follows three steps: embed every memory segment (in batches),
//! embed the incoming segment on its own, then scan the whole index for the
//! highest cosine similarity. The index is exact; there is no approximate
//! search structure behind it.

use std::collections::HashSet;
use std::hash::Hasher;

use fnv::FnvHasher;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::store::{MemoryRecord, TranslationMemoryStore};

pub const DEFAULT_DIM: usize = 512;
pub const DEFAULT_BATCH_SIZE: usize = 256;

/// A fixed-length real vector representing one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("embedding vector must have dim > 0".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "embedding value {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Single-precision copy, as persisted and indexed.
    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Dot product with eight independent lanes; the summation order is fixed,
/// so the result is reproducible and `dot(a, b) == dot(b, a)` bit for bit.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Same as [`dot`] over single-precision storage, accumulated in f64.
fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += f64::from(x[i]) * f64::from(y[i]);
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `dot / sqrt(|a|² |b|²)`, clamped to [-1, 1]. Writing the denominator as a
/// single square root makes `cos(v, v)` exactly 1.
fn cosine_from_parts(dot: f64, norm_sq_a: f64, norm_sq_b: f64) -> f64 {
    (dot / (norm_sq_a * norm_sq_b).sqrt()).clamp(-1.0, 1.0)
}

/// Cosine similarity of two vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let na = dot(&a.values, &a.values);
    let nb = dot(&b.values, &b.values);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector("cosine of a zero vector".into()));
    }
    Ok(cosine_from_parts(dot(&a.values, &b.values), na, nb))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub name: String,
    pub dim: usize,
    pub batch_size: usize,
}

impl EmbedderSpec {
    pub fn new(name: impl Into<String>, dim: usize, batch_size: usize) -> Result<Self> {
        if dim == 0 || batch_size == 0 {
            return Err(Error::Argument("dim and batch size must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            batch_size,
        })
    }
}

#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Anything that turns segments into vectors. One call embeds one batch;
/// batching policy lives in [`embed_batch`].
pub trait EmbeddingProvider: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<EmbeddingVector>, ProviderError>;
}

/// Embeds `texts` in chunks of the provider's batch size, preserving order.
pub fn embed_batch<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Err(Error::Argument("nothing to embed".into()));
    }
    let spec = provider.spec();
    let mut out = Vec::with_capacity(texts.len());
    for (chunk_no, chunk) in texts.chunks(spec.batch_size).enumerate() {
        let first_index = chunk_no * spec.batch_size;
        let vectors = provider.embed(chunk).map_err(|e| Error::Provider {
            first_index,
            message: e.0,
        })?;
        if vectors.len() != chunk.len() {
            return Err(Error::Provider {
                first_index,
                message: format!(
                    "returned {} vectors for {} texts",
                    vectors.len(),
                    chunk.len()
                ),
            });
        }
        for v in vectors {
            if v.dim() != spec.dim {
                return Err(Error::Dimension {
                    expected: spec.dim,
                    got: v.dim(),
                });
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Embeds a single segment, unbatched.
pub fn embed_one<P: EmbeddingProvider + ?Sized>(provider: &P, text: &str) -> Result<EmbeddingVector> {
    let mut v = embed_batch(provider, &[text.to_string()])?;
    Ok(v.pop().expect("one vector per text"))
}

/// FNV-1a 64 of the token's UTF-8 bytes.
fn token_seed(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    h.finish()
}

/// Bag-of-words pseudo-embedding: the mean of per-token random vectors, L2
/// normalised. Each token vector is drawn uniformly from [-1, 1) by a ChaCha8
/// generator seeded with the token's FNV-1a hash, so results are identical
/// across runs and platforms. Empty text gives the zero vector.
pub fn deterministic_embed(text: &str, dim: usize) -> EmbeddingVector {
    let lowered = text.to_lowercase();
    let mut sum = vec![0.0f64; dim];
    let mut tokens = 0usize;
    for token in lowered.split_whitespace() {
        let mut rng = ChaCha8Rng::seed_from_u64(token_seed(token));
        for slot in sum.iter_mut() {
            let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            *slot += 2.0 * unit - 1.0;
        }
        tokens += 1;
    }
    if tokens == 0 {
        return EmbeddingVector::zeros(dim);
    }
    for slot in sum.iter_mut() {
        *slot /= tokens as f64;
    }
    let norm = dot(&sum, &sum).sqrt();
    if norm > 0.0 {
        for slot in sum.iter_mut() {
            *slot /= norm;
        }
    }
    EmbeddingVector { values: sum }
}

/// Provider backed by [`deterministic_embed`].
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    spec: EmbedderSpec,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Self {
        Self::with_batch_size(dim, DEFAULT_BATCH_SIZE)
    }

    pub fn with_batch_size(dim: usize, batch_size: usize) -> Self {
        Self {
            spec: EmbedderSpec {
                name: "deterministic-fnv-chacha8".into(),
                dim: dim.max(1),
                batch_size: batch_size.max(1),
            },
        }
    }
}

impl Default for DeterministicEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

impl EmbeddingProvider for DeterministicEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<EmbeddingVector>, ProviderError> {
        Ok(texts
            .iter()
            .map(|t| deterministic_embed(t, self.spec.dim))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u64,
    pub similarity: f64,
}

/// Exact cosine index over single-precision rows.
///
/// Rows are stored contiguously; squared norms are cached in f64 and all dot
/// products accumulate in f64. The index is meant to be built once and then
/// queried from any number of threads.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<u64>,
    rows: Vec<f32>,
    norms_sq: Vec<f64>,
    known: HashSet<u64>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("index dim must be positive".into()));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            rows: Vec::new(),
            norms_sq: Vec::new(),
            known: HashSet::new(),
        })
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Result<Self> {
        let mut index = Self::new(dim)?;
        index.ids.reserve(capacity);
        index.rows.reserve(capacity * dim);
        index.norms_sq.reserve(capacity);
        index.known.reserve(capacity);
        Ok(index)
    }

    /// Indexes every record of `store`; all of them must carry a vector.
    pub fn from_store(store: &TranslationMemoryStore) -> Result<Self> {
        let mut index = Self::with_capacity(store.dim(), store.len())?;
        for record in store.scan() {
            let id = record.unit.id;
            let vector = record.vector.as_ref().ok_or_else(|| {
                Error::Argument(format!("record {id} has no vector"))
            })?;
            index.add_vector(id, vector)?;
        }
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Appends records. Validation happens up front, so a failed call leaves
    /// the index untouched.
    pub fn add(&mut self, records: &[MemoryRecord]) -> Result<usize> {
        let mut batch_ids = HashSet::with_capacity(records.len());
        for record in records {
            let id = record.unit.id;
            let vector = record.vector.as_ref().ok_or_else(|| {
                Error::Argument(format!("record {id} has no vector"))
            })?;
            self.check_vector(vector)?;
            if self.known.contains(&id) || !batch_ids.insert(id) {
                return Err(Error::Conflict(id));
            }
        }
        for record in records {
            let v = record.vector.as_ref().expect("validated");
            self.push_unchecked(record.unit.id, &v.to_f32());
        }
        Ok(records.len())
    }

    pub fn add_vector(&mut self, id: u64, vector: &EmbeddingVector) -> Result<()> {
        self.check_vector(vector)?;
        if self.known.contains(&id) {
            return Err(Error::Conflict(id));
        }
        self.push_unchecked(id, &vector.to_f32());
        Ok(())
    }

    /// Appends a raw single-precision row.
    pub fn add_row(&mut self, id: u64, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("row {id} has non-finite values")));
        }
        if dot_f32(row, row) == 0.0 {
            return Err(Error::DegenerateVector(format!("row {id} is all zeros")));
        }
        if self.known.contains(&id) {
            return Err(Error::Conflict(id));
        }
        self.push_unchecked(id, row);
        Ok(())
    }

    fn check_vector(&self, vector: &EmbeddingVector) -> Result<()> {
        if vector.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        let row = vector.to_f32();
        if dot_f32(&row, &row) == 0.0 {
            return Err(Error::DegenerateVector("cannot index a zero vector".into()));
        }
        Ok(())
    }

    fn push_unchecked(&mut self, id: u64, row: &[f32]) {
        self.ids.push(id);
        self.rows.extend_from_slice(row);
        self.norms_sq.push(dot_f32(row, row));
        self.known.insert(id);
    }

    /// The first `n` entries as a new index.
    pub fn prefix(&self, n: usize) -> VectorIndex {
        let n = n.min(self.len());
        VectorIndex {
            dim: self.dim,
            ids: self.ids[..n].to_vec(),
            rows: self.rows[..n * self.dim].to_vec(),
            norms_sq: self.norms_sq[..n].to_vec(),
            known: self.ids[..n].iter().copied().collect(),
        }
    }

    pub fn row(&self, pos: usize) -> &[f32] {
        &self.rows[pos * self.dim..(pos + 1) * self.dim]
    }

    fn prepare_query(&self, query: &EmbeddingVector) -> Result<(Vec<f32>, f64)> {
        if query.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: query.dim(),
            });
        }
        // unit length first, so positive rescaling cannot change the rounding
        let norm = query.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateVector("query is a zero vector".into()));
        }
        let q = query.scaled(1.0 / norm).to_f32();
        let nq = dot_f32(&q, &q);
        if nq == 0.0 {
            return Err(Error::DegenerateVector("query is a zero vector".into()));
        }
        Ok((q, nq))
    }

    /// Cosine of `query` against every entry, in insertion order.
    pub fn similarities(&self, query: &EmbeddingVector) -> Result<Vec<f64>> {
        let (q, nq) = self.prepare_query(query)?;
        Ok(self
            .rows
            .par_chunks_exact(self.dim)
            .zip(self.norms_sq.par_iter())
            .map(|(row, &nr)| cosine_from_parts(dot_f32(row, &q), nq, nr))
            .collect())
    }

    /// Exact top-`k` by cosine, best first; equal similarities are ordered by
    /// ascending id. Returns `min(k, len)` neighbours.
    pub fn get_nearest(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<Neighbor>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        let sims = self.similarities(query)?;
        let mut hits: Vec<Neighbor> = self
            .ids
            .iter()
            .zip(sims)
            .map(|(&id, similarity)| Neighbor { id, similarity })
            .collect();
        let order = |a: &Neighbor, b: &Neighbor| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.id.cmp(&b.id))
        };
        let k = k.min(hits.len());
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(order);
        Ok(hits)
    }
}
