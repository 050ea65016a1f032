//! Side-by-side evaluation of lexical and embedding retrieval.
//!
//! For each incoming segment with a known reference translation, both
//! retrieval methods propose a unit and the proposed target is scored against
//! the reference with METEOR. Rows where both methods agree carry no signal
//! and are dropped; the rest are grouped by the lexical fuzzy score of the
//! query against the lexically retrieved source.

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{cosine, embed_batch, EmbeddingProvider, VectorIndex};
use crate::error::{Error, Result};
use crate::lexical::{best_lexical_match, MatchMethod, MatchResult};
use crate::meteor::{meteor_score, MeteorParams};
use crate::normalize::Normalizer;
use crate::store::TranslationMemoryStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub query: String,
    pub reference: String,
    pub lex_match: MatchResult,
    pub emb_match: MatchResult,
    pub lex_fuzzy: f64,
    pub meteor_lex: f64,
    pub meteor_emb: f64,
}

impl EvalRow {
    /// Both methods proposed the same unit or the same translation.
    pub fn is_tie(&self) -> bool {
        self.lex_match.unit.id == self.emb_match.unit.id
            || self.lex_match.unit.target_text == self.emb_match.unit.target_text
    }
}

/// Retrieves the embedding top-1 for an already embedded query.
fn embedding_match(
    query: &crate::embed::EmbeddingVector,
    store: &TranslationMemoryStore,
    index: &VectorIndex,
) -> Result<MatchResult> {
    let hit = index.get_nearest(query, 1)?[0];
    let record = store.get(hit.id).ok_or_else(|| {
        Error::Argument(format!("index id {} is not in the store", hit.id))
    })?;
    Ok(MatchResult {
        unit: record.unit.clone(),
        score: hit.similarity.clamp(0.0, 1.0),
        method: MatchMethod::Embedding,
    })
}

/// One row per `(query, reference)` input, in input order.
pub fn build_eval_rows<P: EmbeddingProvider + ?Sized>(
    inputs: &[(String, String)],
    store: &TranslationMemoryStore,
    index: &VectorIndex,
    provider: &P,
    params: &MeteorParams,
) -> Result<Vec<EvalRow>> {
    if store.is_empty() || index.is_empty() {
        return Err(Error::EmptyMemory);
    }
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let queries: Vec<String> = inputs.iter().map(|(q, _)| q.clone()).collect();
    let vectors = embed_batch(provider, &queries)?;
    inputs
        .par_iter()
        .zip(vectors.par_iter())
        .map(|((query, reference), vector)| {
            let lex_match = best_lexical_match(query, store)?;
            let emb_match = embedding_match(vector, store, index)?;
            Ok(EvalRow {
                query: query.clone(),
                reference: reference.clone(),
                lex_fuzzy: lex_match.score,
                meteor_lex: meteor_score(&lex_match.unit.target_text, reference, params),
                meteor_emb: meteor_score(&emb_match.unit.target_text, reference, params),
                lex_match,
                emb_match,
            })
        })
        .collect()
}

pub fn drop_ties(rows: Vec<EvalRow>) -> Vec<EvalRow> {
    rows.into_iter().filter(|r| !r.is_tie()).collect()
}

/// Bucket edges over [0, 1]. Buckets are `[lo, hi)` except the last, which
/// is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    edges: Vec<f64>,
}

impl PartitionSpec {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
            return Err(Error::Argument("partition edges must run from 0 to 1".into()));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Argument("partition edges must be strictly increasing".into()));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bucket_count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bucket_of(&self, x: f64) -> Option<usize> {
        if !(0.0..=1.0).contains(&x) {
            return None;
        }
        let last = self.bucket_count() - 1;
        Some((0..last).find(|&b| x < self.edges[b + 1]).unwrap_or(last))
    }

    pub fn label(&self, bucket: usize) -> String {
        format!("{}-{}", self.edges[bucket], self.edges[bucket + 1])
    }
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            edges: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub avg_meteor_lex: Option<f64>,
    pub avg_meteor_emb: Option<f64>,
}

/// Buckets are listed from low to high.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub normalized: bool,
    pub rows_in: usize,
    pub rows_retained: usize,
    pub buckets: Vec<BucketStats>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Row as scored after placeholder normalization of the reference and both
/// retrieved targets.
fn normalized_row(row: &EvalRow, normalizer: &Normalizer, params: &MeteorParams) -> Result<(bool, f64, f64)> {
    let reference = normalizer.normalize(&row.reference)?;
    let lex = normalizer.normalize(&row.lex_match.unit.target_text)?;
    let emb = normalizer.normalize(&row.emb_match.unit.target_text)?;
    let tie = row.lex_match.unit.id == row.emb_match.unit.id || lex == emb;
    Ok((
        tie,
        meteor_score(&lex, &reference, params),
        meteor_score(&emb, &reference, params),
    ))
}

/// Drops ties, optionally normalizes, and averages METEOR per fuzzy bucket.
pub fn partition_and_average(
    rows: &[EvalRow],
    spec: &PartitionSpec,
    normalizer: Option<&Normalizer>,
    params: &MeteorParams,
) -> Result<PartitionReport> {
    let mut scored: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
    for row in rows.iter().filter(|r| !r.is_tie()) {
        match normalizer {
            None => scored.push((row.lex_fuzzy, row.meteor_lex, row.meteor_emb)),
            Some(n) => {
                let (tie, lex, emb) = normalized_row(row, n, params)?;
                if !tie {
                    scored.push((row.lex_fuzzy, lex, emb));
                }
            }
        }
    }
    let mut per_bucket: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); spec.bucket_count()];
    for &(fuzzy, lex, emb) in &scored {
        let b = spec
            .bucket_of(fuzzy)
            .ok_or_else(|| Error::Argument(format!("fuzzy score {fuzzy} outside [0, 1]")))?;
        per_bucket[b].0.push(lex);
        per_bucket[b].1.push(emb);
    }
    let buckets = per_bucket
        .iter()
        .enumerate()
        .map(|(b, (lex, emb))| BucketStats {
            lo: spec.edges[b],
            hi: spec.edges[b + 1],
            count: lex.len(),
            avg_meteor_lex: mean(lex),
            avg_meteor_emb: mean(emb),
        })
        .collect();
    Ok(PartitionReport {
        normalized: normalizer.is_some(),
        rows_in: rows.len(),
        rows_retained: scored.len(),
        buckets,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl PartitionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Aligned text table, highest bucket first.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let title = if self.normalized { "fuzzy range (normalized)" } else { "fuzzy range" };
        let _ = writeln!(out, "{title:<26}{:>10}{:>10}{:>8}", "lexical", "embedding", "count");
        for b in self.buckets.iter().rev() {
            let label = format!("{}-{}", b.lo, b.hi);
            let _ = writeln!(
                out,
                "{label:<26}{:>10}{:>10}{:>8}",
                cell(b.avg_meteor_lex),
                cell(b.avg_meteor_emb),
                b.count
            );
        }
        let _ = writeln!(out, "{:<26}{:>28}", "retained / total", format!("{} / {}", self.rows_retained, self.rows_in));
        out
    }
}

/// Which two texts a per-bucket STS mean compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StsPairing {
    /// The query against the source of the embedding match.
    #[default]
    QueryVsSource,
    /// The reference translation against the target of the embedding match.
    ReferenceVsTarget,
}

impl std::str::FromStr for StsPairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "query-source" => Ok(StsPairing::QueryVsSource),
            "reference-target" => Ok(StsPairing::ReferenceVsTarget),
            other => Err(Error::Argument(format!("unknown pairing `{other}`"))),
        }
    }
}

impl fmt::Display for StsPairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StsPairing::QueryVsSource => "query-source",
            StsPairing::ReferenceVsTarget => "reference-target",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_sts: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsBucketReport {
    pub pairing: StsPairing,
    pub buckets: Vec<StsBucket>,
}

impl StsBucketReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<26}{:>10}{:>8}", format!("fuzzy range ({})", self.pairing), "mean sts", "count");
        for b in self.buckets.iter().rev() {
            let _ = writeln!(out, "{:<26}{:>10}{:>8}", format!("{}-{}", b.lo, b.hi), cell(b.mean_sts), b.count);
        }
        out
    }
}

/// Mean cosine per fuzzy bucket between the texts selected by `pairing`.
pub fn mean_sts_per_bucket<P: EmbeddingProvider + ?Sized>(
    rows: &[EvalRow],
    spec: &PartitionSpec,
    provider: &P,
    pairing: StsPairing,
) -> Result<StsBucketReport> {
    let mut sims: Vec<Vec<f64>> = vec![Vec::new(); spec.bucket_count()];
    if !rows.is_empty() {
        let texts: Vec<String> = rows
            .iter()
            .flat_map(|r| match pairing {
                StsPairing::QueryVsSource => [r.query.clone(), r.emb_match.unit.source_text.clone()],
                StsPairing::ReferenceVsTarget => [r.reference.clone(), r.emb_match.unit.target_text.clone()],
            })
            .collect();
        let vectors = embed_batch(provider, &texts)?;
        for (row, pair) in rows.iter().zip(vectors.chunks_exact(2)) {
            let b = spec.bucket_of(row.lex_fuzzy).ok_or_else(|| {
                Error::Argument(format!("fuzzy score {} outside [0, 1]", row.lex_fuzzy))
            })?;
            sims[b].push(cosine(&pair[0], &pair[1])?);
        }
    }
    Ok(StsBucketReport {
        pairing,
        buckets: sims
            .iter()
            .enumerate()
            .map(|(b, s)| StsBucket {
                lo: spec.edges[b],
                hi: spec.edges[b + 1],
                count: s.len(),
                mean_sts: mean(s),
            })
            .collect(),
    })
}
