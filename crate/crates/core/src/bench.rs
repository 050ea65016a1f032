//! Wall-clock timing of the three retrieval steps: embedding the memory,
//! embedding one incoming segment, and retrieving its nearest neighbour.
//!
//! Every measurement runs inside a single-thread pool so numbers are
//! comparable across machines, and reports the median of its samples.

use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{embed_batch, embed_one, EmbeddingProvider, EmbeddingVector, VectorIndex};
use crate::error::{Error, Result};

/// Segments timed as one memory-embedding batch.
pub const MEMORY_BATCH: usize = 256;

const WORDS: [&str; 24] = [
    "the", "committee", "shall", "adopt", "a", "decision", "on", "regulation", "member", "states",
    "report", "annual", "budget", "council", "article", "provisions", "within", "period", "of",
    "months", "commission", "measures", "market", "implementation",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub samples: Vec<f64>,
    pub median: f64,
}

impl Timing {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let median = median(&samples);
        Self { samples, median }
    }
}

pub fn median(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Seconds per step; medians over `repetitions` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub n: usize,
    pub dim: usize,
    pub repetitions: usize,
    pub embed_memory_total: Timing,
    pub embed_single_query: Timing,
    pub retrieve_single_query: Timing,
}

impl TimingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Deterministic pseudo-sentences of 6 to 20 words.
pub fn synthetic_segments(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = 6 + (rng.next_u32() % 15) as usize;
            let mut words: Vec<&str> = (0..len)
                .map(|_| WORDS[(rng.next_u32() as usize) % WORDS.len()])
                .collect();
            words.push("n");
            let mut s = words.join(" ");
            s.push_str(&i.to_string());
            s
        })
        .collect()
}

/// `n` rows drawn uniformly from [-1, 1)^dim.
pub fn synthetic_index(n: usize, dim: usize, seed: u64) -> Result<VectorIndex> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = VectorIndex::with_capacity(dim, n)?;
    let mut row = vec![0f32; dim];
    for id in 0..n as u64 {
        for x in row.iter_mut() {
            *x = uniform(&mut rng) as f32;
        }
        index.add_row(id, &row)?;
    }
    Ok(index)
}

pub fn synthetic_query(dim: usize, seed: u64) -> EmbeddingVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let values = (0..dim).map(|_| uniform(&mut rng)).collect();
    EmbeddingVector::new(values).expect("finite values")
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Times the retrieval step alone against `index`.
pub fn bench_retrieval(index: &VectorIndex, query: &EmbeddingVector, repetitions: usize) -> Result<Timing> {
    if repetitions == 0 {
        return Err(Error::Argument("repetitions must be at least 1".into()));
    }
    single_thread(|| {
        let mut samples = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let (_, secs) = timed(|| index.get_nearest(query, 1))?;
            samples.push(secs);
        }
        Ok(Timing::from_samples(samples))
    })?
}

/// Full three-step benchmark over `n` synthetic segments.
pub fn bench_timing<P: EmbeddingProvider + ?Sized>(
    n: usize,
    provider: &P,
    repetitions: usize,
) -> Result<TimingReport> {
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    if repetitions == 0 {
        return Err(Error::Argument("repetitions must be at least 1".into()));
    }
    let dim = provider.spec().dim;
    let memory = synthetic_segments(n, 1);
    let queries = synthetic_segments(repetitions, 2);
    single_thread(|| {
        let mut memory_samples = Vec::with_capacity(repetitions);
        let mut vectors = Vec::new();
        for _ in 0..repetitions {
            let (v, secs) = timed(|| {
                let mut out = Vec::with_capacity(n);
                for chunk in memory.chunks(MEMORY_BATCH) {
                    out.extend(embed_batch(provider, chunk)?);
                }
                Ok(out)
            })?;
            memory_samples.push(secs);
            vectors = v;
        }
        let mut index = VectorIndex::with_capacity(dim, n)?;
        for (id, v) in vectors.iter().enumerate() {
            index.add_vector(id as u64, v)?;
        }

        let mut query_samples = Vec::with_capacity(repetitions);
        let mut retrieve_samples = Vec::with_capacity(repetitions);
        for q in &queries {
            let (qv, secs) = timed(|| embed_one(provider, q))?;
            query_samples.push(secs);
            let (_, secs) = timed(|| index.get_nearest(&qv, 1))?;
            retrieve_samples.push(secs);
        }
        Ok(TimingReport {
            n,
            dim,
            repetitions,
            embed_memory_total: Timing::from_samples(memory_samples),
            embed_single_query: Timing::from_samples(query_samples),
            retrieve_single_query: Timing::from_samples(retrieve_samples),
        })
    })?
}
