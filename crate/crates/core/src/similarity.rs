//! Name-embedding similarity for squatter campaign analysis.
//!
//! The default provider is a hashed character-trigram term-frequency vector.
//! Any other embedding can be plugged in through [`EmbeddingProvider`].

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

pub const DEFAULT_DIMENSION: usize = 512;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimilarityError {
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("need at least {needed} names, got {got}")]
    InsufficientNames { needed: usize, got: usize },
    #[error("no embedding for label {0:?}")]
    UnknownLabel(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, label: &str) -> Result<Vec<f64>, SimilarityError>;
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Trigram counts of `^label$`, each trigram hashed (FNV-1a over its UTF-8
/// bytes) into one of `dimension` buckets. Colliding trigrams share a
/// bucket.
pub fn trigram_embed(label: &str, dimension: usize) -> Vec<f64> {
    let padded: Vec<char> = std::iter::once('^').chain(label.chars()).chain(std::iter::once('$')).collect();
    let mut v = vec![0.0; dimension];
    let mut buf = String::with_capacity(12);
    for w in padded.windows(3) {
        buf.clear();
        buf.extend(w);
        let bucket = (fnv1a(buf.as_bytes()) % dimension as u64) as usize;
        v[bucket] += 1.0;
    }
    v
}

pub fn default_embed(label: &str) -> Vec<f64> {
    trigram_embed(label, DEFAULT_DIMENSION)
}

#[derive(Debug, Clone, Copy)]
pub struct TrigramProvider {
    dimension: usize,
}

impl TrigramProvider {
    pub fn new(dimension: usize) -> TrigramProvider {
        TrigramProvider {
            dimension: dimension.max(1),
        }
    }
}

impl Default for TrigramProvider {
    fn default() -> Self {
        TrigramProvider::new(DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for TrigramProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, label: &str) -> Result<Vec<f64>, SimilarityError> {
        Ok(trigram_embed(label, self.dimension))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbeddingRecord {
    label: String,
    vector: Vec<f64>,
}

/// Embeddings read from a JSON-lines file of `{label, vector}` records.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedProvider {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedProvider {
    pub fn load_jsonl<R: BufRead>(reader: R) -> Result<PrecomputedProvider, SimilarityError> {
        let mut provider = PrecomputedProvider::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| SimilarityError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| SimilarityError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            provider.insert(rec.label, rec.vector).map_err(|e| SimilarityError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(provider)
    }

    pub fn insert(&mut self, label: String, vector: Vec<f64>) -> Result<(), SimilarityError> {
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(SimilarityError::Parse {
                line: 0,
                message: format!("non-finite component in vector for {label:?}"),
            });
        }
        if self.vectors.is_empty() {
            self.dimension = vector.len();
        } else if vector.len() != self.dimension {
            return Err(SimilarityError::DimensionMismatch(self.dimension, vector.len()));
        }
        self.vectors.insert(label, vector);
        Ok(())
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, label: &str) -> Result<Vec<f64>, SimilarityError> {
        self.vectors
            .get(label)
            .cloned()
            .ok_or_else(|| SimilarityError::UnknownLabel(label.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityThresholds {
    /// Scores below this are not similar.
    pub low: f64,
    /// Scores at or above this are highly similar.
    pub high: f64,
}

impl Default for SimilarityThresholds {
    fn default() -> Self {
        SimilarityThresholds { low: 0.5, high: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityBucket {
    NotSimilar,
    Moderate,
    HighlySimilar,
}

impl SimilarityBucket {
    pub fn from_score(score: f64, thresholds: &SimilarityThresholds) -> SimilarityBucket {
        if score >= thresholds.high {
            SimilarityBucket::HighlySimilar
        } else if score >= thresholds.low {
            SimilarityBucket::Moderate
        } else {
            SimilarityBucket::NotSimilar
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilaritySummary {
    pub wallet: String,
    /// Mean over typo labels of their mean similarity to the other names.
    pub one_to_many_avg: f64,
    /// Mean over all unordered pairs of names.
    pub many_to_many_avg: f64,
    /// Bucket of `many_to_many_avg`.
    pub bucket: SimilarityBucket,
}

/// `typo_labels` refers to entries of `wallet_names` by value; duplicate
/// names are separate entries.
pub fn wallet_similarity(
    wallet: &str,
    wallet_names: &[String],
    typo_labels: &[String],
    provider: &dyn EmbeddingProvider,
    thresholds: &SimilarityThresholds,
) -> Result<SimilaritySummary, SimilarityError> {
    if wallet_names.len() < 2 {
        return Err(SimilarityError::InsufficientNames {
            needed: 2,
            got: wallet_names.len(),
        });
    }
    if typo_labels.is_empty() {
        return Err(SimilarityError::InsufficientNames { needed: 1, got: 0 });
    }
    let vectors: Vec<Vec<f64>> = wallet_names
        .iter()
        .map(|n| provider.embed(n))
        .collect::<Result<_, _>>()?;
    let n = vectors.len();
    let mut sim = vec![vec![1.0; n]; n];
    let mut pair_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let c = cosine(&vectors[i], &vectors[j])?;
            sim[i][j] = c;
            sim[j][i] = c;
            pair_sum += c;
        }
    }
    let many_to_many_avg = pair_sum / (n * (n - 1) / 2) as f64;

    let mut one_sum = 0.0;
    for typo in typo_labels {
        // first entry carrying the label stands for the typo name
        let i = match wallet_names.iter().position(|w| w == typo) {
            Some(i) => i,
            None => {
                let v = provider.embed(typo)?;
                let mean = vectors.iter().map(|w| cosine(&v, w)).sum::<Result<f64, _>>()? / n as f64;
                one_sum += mean;
                continue;
            }
        };
        let others: f64 = (0..n).filter(|&j| j != i).map(|j| sim[i][j]).sum();
        one_sum += others / (n - 1) as f64;
    }
    let one_to_many_avg = one_sum / typo_labels.len() as f64;

    Ok(SimilaritySummary {
        wallet: wallet.to_string(),
        one_to_many_avg,
        many_to_many_avg,
        bucket: SimilarityBucket::from_score(many_to_many_avg, thresholds),
    })
}
