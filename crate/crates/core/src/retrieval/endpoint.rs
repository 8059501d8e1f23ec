//! HTTP-backed scorers: a bi-encoder embedding service for stage one and a
//! cross-encoder service for reranking.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{FirstStageScorer, PairScorer, RetrievalError, RetrievalIndex};
use crate::http;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// `POST {texts}` → `{vectors}`; stage-one score is the cosine similarity
/// between the query vector and each entry vector.
#[derive(Debug, Clone)]
pub struct EmbeddingEndpoint {
    pub url: String,
    pub timeout: Duration,
}

impl EmbeddingEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        EmbeddingEndpoint { url: url.into(), timeout }
    }

    fn embed(&self, texts: Vec<&str>) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let expected = texts.len();
        let response: EmbedResponse = http::post_json(&self.url, None, &EmbedRequest { texts }, self.timeout)?;
        if response.vectors.len() != expected {
            return Err(RetrievalError::ScoreCount { expected, got: response.vectors.len() });
        }
        Ok(response.vectors)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || a.len() != b.len() {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl FirstStageScorer for EmbeddingEndpoint {
    fn score(&self, index: &RetrievalIndex, query: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut texts = vec![query];
        texts.extend(index.entries().iter().map(|e| e.text.as_str()));
        let vectors = self.embed(texts)?;
        let (q, rest) = vectors.split_first().expect("at least the query vector");
        Ok(rest.iter().map(|v| cosine(q, v)).collect())
    }
}

#[derive(Serialize)]
struct PairsRequest<'a> {
    pairs: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
struct PairsResponse {
    scores: Vec<f64>,
}

/// `POST {pairs: [[query, text]]}` → `{scores}`.
#[derive(Debug, Clone)]
pub struct CrossEncoderEndpoint {
    pub url: String,
    pub timeout: Duration,
}

impl CrossEncoderEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        CrossEncoderEndpoint { url: url.into(), timeout }
    }
}

impl PairScorer for CrossEncoderEndpoint {
    fn score_pairs(&self, query: &str, texts: &[&str]) -> Result<Vec<f64>, RetrievalError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let pairs = texts.iter().map(|t| [query, *t]).collect();
        let response: PairsResponse = http::post_json(&self.url, None, &PairsRequest { pairs }, self.timeout)?;
        if response.scores.len() != texts.len() {
            return Err(RetrievalError::ScoreCount { expected: texts.len(), got: response.scores.len() });
        }
        Ok(response.scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 0.0], &[2.0, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }
}
