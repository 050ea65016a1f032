//! Sentence-level METEOR, exact-match stage only.
//!
//! Tokens are lowercased, split on whitespace, and punctuation characters
//! become standalone tokens. The alignment is a one-to-one matching of equal
//! tokens that first maximises the number of matches and then minimises the
//! number of chunks (maximal runs that are contiguous and in the same order
//! in both hypothesis and reference).
//!
//! Score: `P = m/|hyp|`, `R = m/|ref|`, `Fmean = P·R / (α·P + (1-α)·R)`,
//! `penalty = γ·(chunks/m)^β`, `score = Fmean·(1 - penalty)`.
//!
//! Stemming, synonym and paraphrase matchers are not implemented; the
//! [`Matcher`] trait marks where they would plug in.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Characters split off as their own tokens.
pub const PUNCTUATION: &[char] = &[
    '.', ',', ';', ':', '!', '?', '¿', '¡', '(', ')', '[', ']', '{', '}', '"', '\'', '«', '»',
    '“', '”', '‘', '’', '…', '-', '–', '—', '/', '\\', '%', '&', '*', '+', '=', '<', '>', '#',
    '@', '$', '€', '£', '|', '~', '^', '`', '_',
];

/// Upper bound on search nodes in [`align_exact`]. Alignments found within
/// the budget are optimal; past it the best alignment found so far is used.
pub const ALIGN_NODE_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl MeteorParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || beta <= 0.0 || !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Argument(format!(
                "invalid METEOR parameters alpha={alpha} beta={beta} gamma={gamma}"
            )));
        }
        Ok(Self { alpha, beta, gamma })
    }
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
    pub hyp_len: usize,
    pub ref_len: usize,
}

/// Decides whether two tokens may be aligned. Only exact equality ships.
pub trait Matcher {
    fn matches(&self, hyp: &str, reference: &str) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatcher;

impl Matcher for ExactMatcher {
    fn matches(&self, hyp: &str, reference: &str) -> bool {
        hyp == reference
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for word in lowered.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if PUNCTUATION.contains(&c) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

struct Search {
    hyp_ids: Vec<usize>,
    /// For each hypothesis position, the reference positions holding the
    /// same token, ascending.
    candidates: Vec<Vec<usize>>,
    /// Matches still required per token id to reach the maximum.
    need: Vec<usize>,
    /// Occurrences of the token at hypothesis position `i` in `hyp[i+1..]`.
    remaining_after: Vec<usize>,
    ref_used: Vec<bool>,
    best: usize,
    nodes: usize,
}

impl Search {
    /// `prev` is the reference position matched by hypothesis position
    /// `i - 1`, if any.
    fn descend(&mut self, i: usize, prev: Option<usize>, chunks: usize, left: usize) {
        self.nodes += 1;
        if left == 0 {
            self.best = self.best.min(chunks);
            return;
        }
        if i == self.hyp_ids.len() || self.nodes > ALIGN_NODE_BUDGET {
            return;
        }
        let id = self.hyp_ids[i];
        let need = self.need[id];
        let cont = prev
            .map(|p| p + 1)
            .filter(|&c| need > 0 && !self.ref_used.get(c).copied().unwrap_or(true))
            .filter(|c| self.candidates[i].contains(c));
        // a non-continuing step opens at least one more chunk
        if chunks + usize::from(cont.is_none()) >= self.best {
            return;
        }
        if need > 0 {
            let cands = self.candidates[i].clone();
            let ordered = cont
                .into_iter()
                .chain(cands.into_iter().filter(|&c| Some(c) != cont));
            for j in ordered {
                if self.ref_used[j] {
                    continue;
                }
                let extends = Some(j) == cont;
                self.ref_used[j] = true;
                self.need[id] -= 1;
                self.descend(i + 1, Some(j), chunks + usize::from(!extends), left - 1);
                self.need[id] += 1;
                self.ref_used[j] = false;
                // every other option opens a chunk here or later
                if self.best <= chunks + 1 {
                    return;
                }
            }
        }
        // skipping is allowed only if enough occurrences remain later on
        if self.remaining_after[i] >= need {
            self.descend(i + 1, None, chunks, left);
        }
    }
}

/// Exact-match alignment maximising matches, then minimising chunks.
pub fn align_exact<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Alignment {
    let mut vocab: HashMap<&str, usize> = HashMap::new();
    let mut hyp_ids = Vec::with_capacity(hyp.len());
    for t in hyp {
        let n = vocab.len();
        hyp_ids.push(*vocab.entry(t.as_ref()).or_insert(n));
    }
    let mut ref_ids = Vec::with_capacity(reference.len());
    for t in reference {
        let n = vocab.len();
        ref_ids.push(*vocab.entry(t.as_ref()).or_insert(n));
    }
    let v = vocab.len();

    let mut hyp_count = vec![0usize; v];
    let mut ref_count = vec![0usize; v];
    hyp_ids.iter().for_each(|&t| hyp_count[t] += 1);
    ref_ids.iter().for_each(|&t| ref_count[t] += 1);
    let need: Vec<usize> = (0..v).map(|t| hyp_count[t].min(ref_count[t])).collect();
    let matches: usize = need.iter().sum();

    let mut alignment = Alignment {
        matches,
        chunks: 0,
        hyp_len: hyp.len(),
        ref_len: reference.len(),
    };
    if matches == 0 {
        return alignment;
    }

    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); v];
    for (j, &t) in ref_ids.iter().enumerate() {
        positions[t].push(j);
    }
    let candidates = hyp_ids.iter().map(|&t| positions[t].clone()).collect();
    let mut seen = vec![0usize; v];
    let mut remaining_after = vec![0usize; hyp_ids.len()];
    for i in (0..hyp_ids.len()).rev() {
        remaining_after[i] = seen[hyp_ids[i]];
        seen[hyp_ids[i]] += 1;
    }

    let mut search = Search {
        hyp_ids,
        candidates,
        need,
        remaining_after,
        ref_used: vec![false; ref_ids.len()],
        best: matches + 1,
        nodes: 0,
    };
    search.descend(0, None, 0, matches);
    alignment.chunks = search.best.min(matches);
    alignment
}

pub fn score_alignment(a: &Alignment, params: &MeteorParams) -> f64 {
    if a.hyp_len == 0 && a.ref_len == 0 {
        return 1.0;
    }
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / a.hyp_len as f64;
    let r = m / a.ref_len as f64;
    let fmean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
    let penalty = params.gamma * (a.chunks as f64 / m).powf(params.beta);
    fmean * (1.0 - penalty)
}

pub fn meteor_score(hyp: &str, reference: &str, params: &MeteorParams) -> f64 {
    let h = tokenize(hyp);
    let r = tokenize(reference);
    score_alignment(&align_exact(&h, &r), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    /// Enumerates every one-to-one matching of equal tokens.
    fn brute_force(hyp: &[String], reference: &[String]) -> (usize, usize) {
        fn rec(
            i: usize,
            hyp: &[String],
            reference: &[String],
            used: &mut Vec<bool>,
            pairs: &mut Vec<(usize, usize)>,
            best: &mut (usize, usize),
        ) {
            if i == hyp.len() {
                let m = pairs.len();
                let mut chunks = 0;
                for (k, &(h, r)) in pairs.iter().enumerate() {
                    let cont = k > 0 && pairs[k - 1] == (h - 1, r.wrapping_sub(1)) && r > 0;
                    if !cont {
                        chunks += 1;
                    }
                }
                if m > best.0 || (m == best.0 && chunks < best.1) {
                    *best = (m, chunks);
                }
                return;
            }
            rec(i + 1, hyp, reference, used, pairs, best);
            for j in 0..reference.len() {
                if !used[j] && hyp[i] == reference[j] {
                    used[j] = true;
                    pairs.push((i, j));
                    rec(i + 1, hyp, reference, used, pairs, best);
                    pairs.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = (0, 0);
        rec(0, hyp, reference, &mut vec![false; reference.len()], &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Hola, mundo."), vec!["hola", ",", "mundo", "."]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("  a   b "), vec!["a", "b"]);
        assert_eq!(tokenize("¿Qué?"), vec!["¿", "qué", "?"]);
    }

    #[test]
    fn alignment_hand_cases() {
        let a = align_exact(&toks("the cat sat"), &toks("the cat sat"));
        assert_eq!((a.matches, a.chunks), (3, 1));
        let a = align_exact(&toks("the cat"), &toks("cat the"));
        assert_eq!((a.matches, a.chunks), (2, 2));
        assert_eq!(brute_force(&toks("the cat"), &toks("cat the")), (2, 2));
        let a = align_exact(&toks("a b"), &toks("c d"));
        assert_eq!((a.matches, a.chunks), (0, 0));
    }

    #[test]
    fn alignment_prefers_fewer_chunks_with_repeats() {
        // greedy left-to-right would match the first "the" and split chunks
        let a = align_exact(&toks("the cat on the mat"), &toks("on the mat the cat"));
        assert_eq!((a.matches, a.chunks), (5, 2));
    }

    #[test]
    fn meteor_hand_cases() {
        let p = MeteorParams::default();
        let s = meteor_score("the cat sat", "the cat sat", &p);
        let expected = 1.0 - 0.5 * (1.0f64 / 3.0).powi(3);
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.98148).abs() < 1e-5);
        assert_eq!(meteor_score("a b", "c d", &p), 0.0);
        assert!((meteor_score("the cat", "cat the", &p) - 0.5).abs() < 1e-12);
        assert_eq!(meteor_score("", "", &p), 1.0);
        assert_eq!(meteor_score("", "x", &p), 0.0);
        assert_eq!(meteor_score("x", "", &p), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(MeteorParams::new(1.5, 3.0, 0.5).is_err());
        assert!(MeteorParams::new(0.9, 0.0, 0.5).is_err());
        assert!(MeteorParams::new(0.9, 3.0, 0.5).is_ok());
    }

    #[test]
    fn long_repetitive_sentence_terminates() {
        let hyp = "de la de la de la de la de la de la de la de la de la de la de la de la";
        let r = "la de la de la de la de la de la de la de la de la de la de la de la de";
        let a = align_exact(&tokenize(hyp), &tokenize(r));
        assert_eq!(a.matches, 24);
        assert_eq!(a.chunks, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1500))]

        #[test]
        fn matches_exhaustive_oracle(
            hyp in proptest::collection::vec("[abc]", 0..=6),
            reference in proptest::collection::vec("[abc]", 0..=6),
        ) {
            let a = align_exact(&hyp, &reference);
            prop_assert_eq!((a.matches, a.chunks), brute_force(&hyp, &reference));
            prop_assert!(a.chunks <= a.matches);
            prop_assert!(a.matches <= hyp.len().min(reference.len()));
        }

        #[test]
        fn score_bounds(
            hyp in proptest::collection::vec("[a-e]", 1..10),
            reference in proptest::collection::vec("[a-e]", 1..10),
        ) {
            let p = MeteorParams::default();
            let s = score_alignment(&align_exact(&hyp, &reference), &p);
            prop_assert!((0.0..=1.0).contains(&s));
            let own = score_alignment(&align_exact(&hyp, &hyp), &p);
            let floor = 1.0 - p.gamma * (1.0 / hyp.len() as f64).powf(p.beta);
            prop_assert!(own >= floor - 1e-12);
        }

        #[test]
        fn appending_unmatched_token_never_helps(
            hyp in proptest::collection::vec("[a-e]", 1..10),
            reference in proptest::collection::vec("[a-e]", 1..10),
        ) {
            let p = MeteorParams::default();
            let before = score_alignment(&align_exact(&hyp, &reference), &p);
            let mut longer = hyp.clone();
            longer.push("zz".to_string());
            let after = score_alignment(&align_exact(&longer, &reference), &p);
            prop_assert!(after <= before + 1e-12);
        }
    }
}
