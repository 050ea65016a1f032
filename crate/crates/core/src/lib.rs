//! Translation-memory retrieval and evaluation.
//!
//! Units are stored with optional sentence embeddings and retrieved either by
//! character edit distance or by cosine similarity. The evaluation side
//! scores retrieved targets with METEOR, partitions them by fuzzy score and
//! correlates similarity scores with human STS judgements.

pub mod bench;
pub mod embed;
pub mod error;
pub mod lexical;
pub mod meteor;
pub mod normalize;
pub mod sidecar;
pub mod store;
pub mod sts;
pub mod tm_eval;
pub mod unit;

pub use embed::{
    cosine, deterministic_embed, embed_batch, embed_one, DeterministicEmbedder, EmbedderSpec,
    EmbeddingProvider, EmbeddingVector, Neighbor, ProviderError, VectorIndex,
};
pub use error::{Error, Result};
pub use lexical::{
    best_lexical_match, classify_match, fuzzy_score, levenshtein, minmax_similarity, FuzzyThresholds,
    MatchClass, MatchMethod, MatchResult,
};
pub use meteor::{align_exact, meteor_score, Alignment, MeteorParams};
pub use normalize::{apply_placeholders, Gazetteer, Normalizer, PlaceholderKind, PlaceholderSpan};
pub use store::{MemoryRecord, TranslationMemoryStore};
pub use sts::{evaluate_sts, load_sts, StsFormat, StsMethod, StsMetrics, StsPair, StsReport};
pub use tm_eval::{
    build_eval_rows, drop_ties, mean_sts_per_bucket, partition_and_average, EvalRow, PartitionReport,
    PartitionSpec, StsPairing,
};
pub use unit::{load_units, LanguagePair, TranslationUnit, UnitFormat};
