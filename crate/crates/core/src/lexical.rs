//! Edit-distance matching: the classic fuzzy-match baseline.
//!
//! Distances are character-level (Unicode scalar values) with unit cost for
//! insertion, deletion and substitution, computed on raw text with no case
//! folding. The fuzzy score is `1 - d / max(|a|, |b|)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::TranslationMemoryStore;
use crate::unit::TranslationUnit;

/// Lower edge of the fuzzy band. Exact matches are always score 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzyThresholds {
    fuzzy_low: f64,
}

impl FuzzyThresholds {
    pub const EXACT: f64 = 1.0;

    pub fn new(fuzzy_low: f64) -> Result<Self> {
        if !(fuzzy_low > 0.0 && fuzzy_low < 1.0) {
            return Err(Error::Argument(format!(
                "fuzzy_low must lie in (0, 1), got {fuzzy_low}"
            )));
        }
        Ok(Self { fuzzy_low })
    }

    pub fn fuzzy_low(&self) -> f64 {
        self.fuzzy_low
    }
}

impl Default for FuzzyThresholds {
    fn default() -> Self {
        Self { fuzzy_low: 0.70 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMethod {
    Lexical,
    Embedding,
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMethod::Lexical => "lexical",
            MatchMethod::Embedding => "embedding",
        })
    }
}

/// A retrieved unit with its score in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub unit: TranslationUnit,
    pub score: f64,
    pub method: MatchMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchClass {
    Exact,
    Fuzzy,
    NoMatch,
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

pub fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);
    // keep the DP row over the shorter string
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (i, lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let up = row[j + 1];
            let cost = usize::from(lc != sc);
            row[j + 1] = (diag + cost).min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[short.len()]
}

pub fn fuzzy_score(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    fuzzy_score_chars(&a, &b)
}

/// Written as `(max - d) / max` so that scores land exactly on the decimal
/// bucket edges (4/5 is the double nearest 0.8).
pub fn fuzzy_score_chars(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    let d = levenshtein_chars(a, b);
    (longest - d) as f64 / longest as f64
}

/// Negates distances and min-max scales them over the whole list, so the
/// smallest distance maps to 1.0 and the largest to 0.0. A list whose
/// distances are all equal maps to all 1.0.
pub fn minmax_similarity(distances: &[usize]) -> Result<Vec<f64>> {
    let (min, max) = match (distances.iter().min(), distances.iter().max()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::Argument("min-max over an empty list".into())),
    };
    if min == max {
        return Ok(vec![1.0; distances.len()]);
    }
    let span = (max - min) as f64;
    Ok(distances
        .iter()
        .map(|&d| (max - d) as f64 / span)
        .collect())
}

pub fn classify_match(score: f64, thresholds: &FuzzyThresholds) -> MatchClass {
    if score >= FuzzyThresholds::EXACT {
        MatchClass::Exact
    } else if score >= thresholds.fuzzy_low {
        MatchClass::Fuzzy
    } else {
        MatchClass::NoMatch
    }
}

/// Higher score wins; on equal scores the lower id wins.
fn better(a: (f64, u64, usize), b: (f64, u64, usize)) -> (f64, u64, usize) {
    if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
        a
    } else {
        b
    }
}

/// Exhaustive scan for the unit whose source maximises [`fuzzy_score`].
pub fn best_lexical_match(query: &str, store: &TranslationMemoryStore) -> Result<MatchResult> {
    let mut top = lexical_top_k(query, store, 1)?;
    Ok(top.remove(0))
}

/// The `k` best lexical matches, best first, ties by ascending id.
pub fn lexical_top_k(query: &str, store: &TranslationMemoryStore, k: usize) -> Result<Vec<MatchResult>> {
    if store.is_empty() {
        return Err(Error::EmptyMemory);
    }
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let q: Vec<char> = query.chars().collect();
    let records = store.records();
    if k == 1 {
        let (score, _, pos) = records
            .par_iter()
            .enumerate()
            .map(|(pos, r)| {
                let s: Vec<char> = r.unit.source_text.chars().collect();
                (fuzzy_score_chars(&q, &s), r.unit.id, pos)
            })
            .reduce_with(better)
            .expect("non-empty store");
        return Ok(vec![MatchResult {
            unit: records[pos].unit.clone(),
            score,
            method: MatchMethod::Lexical,
        }]);
    }
    let mut scored: Vec<(f64, u64, usize)> = records
        .par_iter()
        .enumerate()
        .map(|(pos, r)| {
            let s: Vec<char> = r.unit.source_text.chars().collect();
            (fuzzy_score_chars(&q, &s), r.unit.id, pos)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(score, _, pos)| MatchResult {
            unit: records[pos].unit.clone(),
            score,
            method: MatchMethod::Lexical,
        })
        .collect())
}
