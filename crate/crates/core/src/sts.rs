//! Semantic textual similarity evaluation: dataset loading, correlation
//! metrics and the two unsupervised scoring methods.
//!
//! Pearson is the product-moment correlation, Spearman the Pearson
//! correlation of averaged ranks. MSE is computed after mapping predictions
//! from [0, 1] linearly onto the gold range of the dataset.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{cosine, embed_batch, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::lexical::{levenshtein, minmax_similarity};

/// Gold range of SICK relatedness scores.
pub const SICK_SCALE: (f64, f64) = (1.0, 5.0);
/// Gold range of STS Benchmark style `s1<TAB>s2<TAB>score` files.
pub const TSV3_SCALE: (f64, f64) = (0.0, 5.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsPair {
    pub s1: String,
    pub s2: String,
    pub gold: f64,
    pub scale: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StsFormat {
    /// `pair_ID  sentence_A  sentence_B  relatedness_score  entailment_judgment`
    Sick,
    /// `s1  s2  score`
    Tsv3,
}

impl StsFormat {
    pub fn scale(self) -> (f64, f64) {
        match self {
            StsFormat::Sick => SICK_SCALE,
            StsFormat::Tsv3 => TSV3_SCALE,
        }
    }
}

impl FromStr for StsFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sick" => Ok(StsFormat::Sick),
            "tsv3" => Ok(StsFormat::Tsv3),
            other => Err(Error::Argument(format!("unknown STS format `{other}`"))),
        }
    }
}

impl fmt::Display for StsFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StsFormat::Sick => "sick",
            StsFormat::Tsv3 => "tsv3",
        })
    }
}

pub fn load_sts(path: &Path, format: StsFormat) -> Result<Vec<StsPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sts(&text, format)
}

pub fn parse_sts(text: &str, format: StsFormat) -> Result<Vec<StsPair>> {
    let scale = format.scale();
    let mut pairs = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (s1, s2, score) = match format {
            StsFormat::Sick => {
                if fields[0] == "pair_ID" {
                    continue;
                }
                if fields.len() < 4 {
                    return Err(Error::parse(
                        line_no,
                        format!("expected at least 4 fields, got {}", fields.len()),
                    ));
                }
                (fields[1], fields[2], fields[3])
            }
            StsFormat::Tsv3 => {
                if fields.len() != 3 {
                    return Err(Error::parse(
                        line_no,
                        format!("expected 3 fields, got {}", fields.len()),
                    ));
                }
                (fields[0], fields[1], fields[2])
            }
        };
        let gold: f64 = score
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, format!("unparseable score `{score}`")))?;
        if !(scale.0..=scale.1).contains(&gold) {
            return Err(Error::parse(
                line_no,
                format!("score {gold} outside [{}, {}]", scale.0, scale.1),
            ));
        }
        pairs.push(StsPair {
            s1: s1.to_string(),
            s2: s2.to_string(),
            gold,
            scale,
        });
    }
    Ok(pairs)
}

fn check_lengths(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < min {
        return Err(Error::Argument(format!(
            "need at least {min} points, got {}",
            x.len()
        )));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Argument("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &pos in &order[i..=j] {
            ranks[pos] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y, 2)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Plain mean squared error; callers rescale beforehand.
pub fn mse(pred: &[f64], gold: &[f64]) -> Result<f64> {
    check_lengths(pred, gold, 1)?;
    let sum: f64 = pred.iter().zip(gold).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok(sum / pred.len() as f64)
}

/// Maps `x` linearly from `from` onto `to`.
pub fn rescale(x: f64, from: (f64, f64), to: (f64, f64)) -> f64 {
    to.0 + (x - from.0) * (to.1 - to.0) / (from.1 - from.0)
}

#[derive(Clone, Copy)]
pub enum StsMethod<'a> {
    EmbedCosine(&'a dyn EmbeddingProvider),
    EditMinmax,
}

impl StsMethod<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            StsMethod::EmbedCosine(_) => "embed_cosine",
            StsMethod::EditMinmax => "edit_minmax",
        }
    }
}

impl fmt::Debug for StsMethod<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StsMethod::EmbedCosine(p) => write!(f, "EmbedCosine({})", p.spec().name),
            StsMethod::EditMinmax => f.write_str("EditMinmax"),
        }
    }
}

/// Raw similarity predictions, one per pair. Cosine values lie in [-1, 1],
/// min-max values in [0, 1].
pub fn sts_predictions(pairs: &[StsPair], method: StsMethod<'_>) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(Error::Argument("no STS pairs to evaluate".into()));
    }
    match method {
        StsMethod::EditMinmax => {
            let distances: Vec<usize> = pairs.par_iter().map(|p| levenshtein(&p.s1, &p.s2)).collect();
            minmax_similarity(&distances)
        }
        StsMethod::EmbedCosine(provider) => {
            let texts: Vec<String> = pairs
                .iter()
                .flat_map(|p| [p.s1.clone(), p.s2.clone()])
                .collect();
            let vectors = embed_batch(provider, &texts)?;
            vectors
                .chunks_exact(2)
                .map(|v| cosine(&v[0], &v[1]))
                .collect()
        }
    }
}

/// Correlations are `None` when either side has zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StsMetrics {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub mse: f64,
}

pub fn sts_metrics(pred: &[f64], pairs: &[StsPair]) -> Result<StsMetrics> {
    let scale = pairs
        .first()
        .map(|p| p.scale)
        .ok_or_else(|| Error::Argument("no STS pairs to evaluate".into()))?;
    if pairs.iter().any(|p| p.scale != scale) {
        return Err(Error::Argument("pairs mix gold scales".into()));
    }
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    let optional = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Argument(m)) if m == "zero variance" || pred.len() < 2 => Ok(None),
        Err(e) => Err(e),
    };
    let pearson = optional(pearson(pred, &gold))?;
    let spearman = optional(spearman(pred, &gold))?;
    // negative cosines count as no similarity on the gold scale
    let scaled: Vec<f64> = pred
        .iter()
        .map(|&p| rescale(p.clamp(0.0, 1.0), (0.0, 1.0), scale))
        .collect();
    Ok(StsMetrics {
        pearson,
        spearman,
        mse: mse(&scaled, &gold)?,
    })
}

pub fn evaluate_sts(pairs: &[StsPair], method: StsMethod<'_>) -> Result<StsMetrics> {
    let pred = sts_predictions(pairs, method)?;
    sts_metrics(&pred, pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsReport {
    pub method: String,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub mse: f64,
    pub n: usize,
}

impl StsReport {
    pub fn new(method: &StsMethod<'_>, metrics: StsMetrics, n: usize) -> Self {
        Self {
            method: method.name().to_string(),
            pearson: metrics.pearson,
            spearman: metrics.spearman,
            mse: metrics.mse,
            n,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::DeterministicEmbedder;
    use proptest::prelude::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Error-free transformation sum (Neumaier), used by the oracles.
    fn exact_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let t = s + x;
            c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
            s = t;
        }
        s + c
    }

    /// Raw-moment formula with compensated sums.
    fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx = exact_sum(x.iter().copied());
        let sy = exact_sum(y.iter().copied());
        let sxy = exact_sum(x.iter().zip(y).map(|(a, b)| a * b));
        let sxx = exact_sum(x.iter().map(|a| a * a));
        let syy = exact_sum(y.iter().map(|b| b * b));
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    /// Rank by counting: rank = #less + (#equal + 1) / 2.
    fn oracle_ranks(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|a| {
                let less = x.iter().filter(|b| *b < a).count() as f64;
                let equal = x.iter().filter(|b| *b == a).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn uniform(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[test]
    fn pearson_hand_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::Argument(_))));
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Argument(_))));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn spearman_hand_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0, 3.0]), vec![4.0, 1.0, 4.0, 2.0, 4.0]);
    }

    #[test]
    fn mse_hand_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.5);
        // constant prediction: mean squared deviation of gold around it
        let gold = [1.0, 2.0, 3.0, 4.0];
        let expected = gold.iter().map(|g| (g - 2.5f64).powi(2)).sum::<f64>() / 4.0;
        assert_eq!(mse(&[2.5; 4], &gold).unwrap(), expected);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn metrics_match_oracles_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for round in 0..100 {
            let x: Vec<f64> = (0..50).map(|_| uniform(&mut rng) * 5.0).collect();
            // some rounds quantized to force ties
            let y: Vec<f64> = x
                .iter()
                .map(|a| {
                    let v = 0.3 * a + uniform(&mut rng) * 4.0;
                    if round % 3 == 0 { (v * 2.0).round() / 2.0 } else { v }
                })
                .collect();
            let p = pearson(&x, &y).unwrap();
            assert!((p - oracle_pearson(&x, &y)).abs() < 1e-9);
            let s = spearman(&x, &y).unwrap();
            assert!((s - oracle_pearson(&oracle_ranks(&x), &oracle_ranks(&y))).abs() < 1e-9);
            let m = mse(&x, &y).unwrap();
            let om = exact_sum(x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b))) / 50.0;
            assert!((m - om).abs() < 1e-9);
        }
    }

    #[test]
    fn parse_tsv3() {
        let pairs = parse_sts("a cat\tthe cat\t4.2\n\n", StsFormat::Tsv3).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].gold, 4.2);
        assert_eq!(pairs[0].s2, "the cat");
        assert_eq!(pairs[0].scale, TSV3_SCALE);
        let err = parse_sts("a\tb\t4.0\na\tb\thigh\n", StsFormat::Tsv3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_sts("a\tb\t7\n", StsFormat::Tsv3).is_err());
    }

    #[test]
    fn parse_sick() {
        let text = "pair_ID\tsentence_A\tsentence_B\trelatedness_score\tentailment_judgment\r\n\
                    1\tA boy runs\tA kid runs\t4.5\tENTAILMENT\r\n\
                    2\tA dog\tA plane\t1.1\tNEUTRAL\r\n";
        let pairs = parse_sts(text, StsFormat::Sick).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].s1, "A boy runs");
        assert_eq!(pairs[1].gold, 1.1);
        assert_eq!(pairs[1].scale, SICK_SCALE);
        assert!(matches!(
            parse_sts("1\ta\tb\tx\tNEUTRAL\n", StsFormat::Sick),
            Err(Error::Parse { line: 1, .. })
        ));
        // out of the 1..5 range
        assert!(parse_sts("1\ta\tb\t0.5\tNEUTRAL\n", StsFormat::Sick).is_err());
    }

    fn pair(s1: &str, s2: &str, gold: f64) -> StsPair {
        StsPair {
            s1: s1.into(),
            s2: s2.into(),
            gold,
            scale: SICK_SCALE,
        }
    }

    #[test]
    fn identical_pairs_score_perfectly() {
        let pairs = vec![pair("a man walks", "a man walks", 5.0), pair("two dogs", "two dogs", 5.0)];
        let embedder = DeterministicEmbedder::new(64);
        let pred = sts_predictions(&pairs, StsMethod::EmbedCosine(&embedder)).unwrap();
        assert_eq!(pred, vec![1.0, 1.0]);
        let m = evaluate_sts(&pairs, StsMethod::EmbedCosine(&embedder)).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.pearson, None);
        assert_eq!(m.spearman, None);
    }

    #[test]
    fn edit_minmax_predictions() {
        let pairs = vec![
            pair("abc", "abc", 5.0),
            pair("abc", "abd", 3.0),
            pair("abc", "xyz", 1.0),
        ];
        let pred = sts_predictions(&pairs, StsMethod::EditMinmax).unwrap();
        assert_eq!(pred, vec![1.0, 2.0 / 3.0, 0.0]);
        let m = evaluate_sts(&pairs, StsMethod::EditMinmax).unwrap();
        // centred x = (4, 1, -5)/9, y = (2, 0, -2)
        assert!((m.pearson.unwrap() - 18.0 / 336f64.sqrt()).abs() < 1e-12);
        assert!((m.spearman.unwrap() - 1.0).abs() < 1e-12);
        // predictions map to 5, 11/3, 1
        let expected = (11.0f64 / 3.0 - 3.0).powi(2) / 3.0;
        assert!((m.mse - expected).abs() < 1e-12);
        assert!(evaluate_sts(&[], StsMethod::EditMinmax).is_err());
    }

    #[test]
    fn report_json_shape() {
        let metrics = StsMetrics { pearson: Some(0.5), spearman: None, mse: 1.0 };
        let report = StsReport::new(&StsMethod::EditMinmax, metrics, 3);
        assert_eq!(
            report.to_json(),
            r#"{"method":"edit_minmax","pearson":0.5,"spearman":null,"mse":1.0,"n":3}"#
        );
    }

    fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-100.0f64..100.0, n),
                proptest::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant((x, y) in sample(), a in 0.01f64..50.0, b in -50.0f64..50.0) {
            if let Ok(p) = pearson(&x, &y) {
                let tx: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                prop_assert!((pearson(&tx, &y).unwrap() - p).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&p));
            }
        }

        #[test]
        fn spearman_monotone_invariant((x, y) in sample()) {
            if let Ok(s) = spearman(&x, &y) {
                let tx: Vec<f64> = x.iter().map(|v| (v / 40.0).exp() + v).collect();
                prop_assert!((spearman(&tx, &y).unwrap() - s).abs() < 1e-9);
            }
        }

        #[test]
        fn edit_minmax_non_degenerate(
            texts in proptest::collection::vec(("[ab]{0,6}", "[ab]{0,6}"), 2..20)
        ) {
            let pairs: Vec<StsPair> = texts.iter().map(|(a, b)| pair(a, b, 3.0)).collect();
            let pred = sts_predictions(&pairs, StsMethod::EditMinmax).unwrap();
            prop_assert!(pred.iter().all(|p| (0.0..=1.0).contains(p)));
            let d: Vec<usize> = texts.iter().map(|(a, b)| levenshtein(a, b)).collect();
            if d.iter().min() != d.iter().max() {
                prop_assert!(pred.contains(&0.0) && pred.contains(&1.0));
            }
        }
    }
}
