//! Retrieve-and-rerank shortlisting of catalog entries for a piece of source
//! code, and packing of the shortlist into prompt-sized chunks.
//!
//! Stage one scores every entry against the query (BM25 by default, or an
//! embedding endpoint) and keeps a pool of `pool_factor * k` candidates.
//! Stage two reorders the pool with a pairwise scorer (token overlap by
//! default, or a cross-encoder endpoint) and truncates to `k`.

mod endpoint;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::CatalogEntry;
use crate::http::HttpError;

pub use endpoint::{CrossEncoderEndpoint, EmbeddingEndpoint};

/// Default shortlist size.
pub const DEFAULT_TOP_K: usize = 20;
/// Stage-one pool size as a multiple of `k`.
pub const DEFAULT_POOL_FACTOR: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("cannot build a retrieval index from zero entries")]
    EmptyIndex,
    #[error("duplicate entry key `{0}` in retrieval index")]
    DuplicateKey(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("scoring endpoint failed: {0}")]
    Endpoint(#[from] HttpError),
    #[error("scoring endpoint returned {got} scores for {expected} inputs")]
    ScoreCount { expected: usize, got: usize },
    #[error("entry `{key}` needs {estimate} tokens, more than the budget of {budget}")]
    ChunkTooLarge { key: String, estimate: usize, budget: usize },
}

/// Lowercase, split on non-alphanumerics, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn distinct_tokens(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenize(text).into_iter().filter(|t| seen.insert(t.clone())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub entry: usize,
    pub term_frequency: u32,
}

/// Inverted index over entry texts.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    entries: Vec<CatalogEntry>,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
}

impl RetrievalIndex {
    pub fn build(entries: Vec<CatalogEntry>) -> Result<Self, RetrievalError> {
        if entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let mut keys = HashSet::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            if !keys.insert(entry.key.as_str()) {
                return Err(RetrievalError::DuplicateKey(entry.key.clone()));
            }
            let tokens = tokenize(&entry.text);
            doc_lengths.push(tokens.len());
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (token, term_frequency) in tf {
                postings.entry(token).or_default().push(Posting { entry: i, term_frequency });
            }
        }
        let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / doc_lengths.len() as f64;
        Ok(RetrievalIndex { entries, postings, doc_lengths, avg_doc_length })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Produces one stage-one score per index entry.
pub trait FirstStageScorer: Send + Sync {
    fn score(&self, index: &RetrievalIndex, query: &str) -> Result<Vec<f64>, RetrievalError>;
}

/// Scores (query, text) pairs for reranking.
pub trait PairScorer: Send + Sync {
    fn score_pairs(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RetrievalError>;
}

/// Okapi BM25 with the non-negative idf `ln(1 + (N - df + 0.5) / (df + 0.5))`.
/// Each distinct query token contributes once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Bm25 { k1: 1.2, b: 0.75 }
    }
}

impl FirstStageScorer for Bm25 {
    fn score(&self, index: &RetrievalIndex, query: &str) -> Result<Vec<f64>, RetrievalError> {
        let n = index.len() as f64;
        let mut scores = vec![0.0; index.len()];
        for token in distinct_tokens(query) {
            let postings = index.postings(&token);
            if postings.is_empty() {
                continue;
            }
            let df = postings.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for p in postings {
                let tf = f64::from(p.term_frequency);
                let dl = index.doc_lengths[p.entry] as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * dl / index.avg_doc_length);
                scores[p.entry] += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        Ok(scores)
    }
}

/// Fraction of distinct query tokens present in the text.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenOverlap;

impl PairScorer for TokenOverlap {
    fn score_pairs(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RetrievalError> {
        let q = distinct_tokens(query);
        Ok(texts
            .iter()
            .map(|text| {
                if q.is_empty() {
                    return 0.0;
                }
                let doc: HashSet<String> = tokenize(text).into_iter().collect();
                q.iter().filter(|t| doc.contains(*t)).count() as f64 / q.len() as f64
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub entry: CatalogEntry,
    pub stage1_score: f64,
    pub stage2_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortList {
    pub query: String,
    pub k: usize,
    pub ranked: Vec<RankedEntry>,
}

impl ShortList {
    pub fn keys(&self) -> Vec<&str> {
        self.ranked.iter().map(|r| r.entry.key.as_str()).collect()
    }
}

fn stage1_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.stage1_score
        .total_cmp(&a.stage1_score)
        .then_with(|| a.entry.key.cmp(&b.entry.key))
}

/// Stage-two order: overlap, then stage-one score, then key.
pub fn rank_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.stage2_score
        .total_cmp(&a.stage2_score)
        .then_with(|| b.stage1_score.total_cmp(&a.stage1_score))
        .then_with(|| a.entry.key.cmp(&b.entry.key))
}

pub struct Retriever {
    first: Box<dyn FirstStageScorer>,
    second: Box<dyn PairScorer>,
    pool_factor: usize,
}

impl Default for Retriever {
    fn default() -> Self {
        Retriever::new(Box::new(Bm25::default()), Box::new(TokenOverlap), DEFAULT_POOL_FACTOR)
    }
}

impl Retriever {
    pub fn new(first: Box<dyn FirstStageScorer>, second: Box<dyn PairScorer>, pool_factor: usize) -> Self {
        Retriever { first, second, pool_factor: pool_factor.max(1) }
    }

    /// All entries ranked by stage-one score (descending, then key). Empty
    /// when the query has no tokens.
    pub fn score_stage1(&self, index: &RetrievalIndex, query: &str) -> Result<Vec<RankedEntry>, RetrievalError> {
        if tokenize(query).is_empty() {
            return Ok(Vec::new());
        }
        let scores = self.first.score(index, query)?;
        if scores.len() != index.len() {
            return Err(RetrievalError::ScoreCount { expected: index.len(), got: scores.len() });
        }
        let mut ranked: Vec<RankedEntry> = index
            .entries
            .iter()
            .zip(scores)
            .map(|(entry, s)| RankedEntry { entry: entry.clone(), stage1_score: s, stage2_score: 0.0 })
            .collect();
        ranked.sort_by(stage1_order);
        Ok(ranked)
    }

    pub fn rerank(&self, mut candidates: Vec<RankedEntry>, query: &str) -> Result<Vec<RankedEntry>, RetrievalError> {
        let texts: Vec<&str> = candidates.iter().map(|c| c.entry.text.as_str()).collect();
        let scores = self.second.score_pairs(query, &texts)?;
        if scores.len() != candidates.len() {
            return Err(RetrievalError::ScoreCount { expected: candidates.len(), got: scores.len() });
        }
        for (c, s) in candidates.iter_mut().zip(scores) {
            c.stage2_score = s;
        }
        candidates.sort_by(rank_order);
        Ok(candidates)
    }

    pub fn retrieve_top_k(&self, index: &RetrievalIndex, query: &str, k: usize) -> Result<ShortList, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        let mut pool = self.score_stage1(index, query)?;
        pool.truncate(k.saturating_mul(self.pool_factor).min(index.len()));
        let mut ranked = self.rerank(pool, query)?;
        ranked.truncate(k);
        Ok(ShortList { query: query.to_owned(), k, ranked })
    }
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub entries: Vec<RankedEntry>,
    pub token_estimate: usize,
}

impl Chunk {
    /// Prompt context: one line per entry.
    pub fn context(&self) -> String {
        self.entries.iter().map(|r| r.entry.context_line()).collect::<Vec<_>>().join("\n")
    }
}

/// Token estimate of one entry as it appears in a chunk's context.
pub fn entry_tokens(entry: &CatalogEntry) -> usize {
    estimate_tokens(&entry.context_line())
}

/// Greedy packing in rank order.
pub fn chunk_entries(shortlist: &ShortList, token_budget: usize) -> Result<Vec<Chunk>, RetrievalError> {
    let mut chunks = Vec::new();
    let mut current = Chunk { entries: Vec::new(), token_estimate: 0 };
    for ranked in &shortlist.ranked {
        let estimate = entry_tokens(&ranked.entry);
        if estimate > token_budget {
            return Err(RetrievalError::ChunkTooLarge { key: ranked.entry.key.clone(), estimate, budget: token_budget });
        }
        if current.token_estimate + estimate > token_budget {
            chunks.push(std::mem::replace(&mut current, Chunk { entries: Vec::new(), token_estimate: 0 }));
        }
        current.token_estimate += estimate;
        current.entries.push(ranked.clone());
    }
    if !current.entries.is_empty() {
        chunks.push(current);
    }
    Ok(chunks)
}
