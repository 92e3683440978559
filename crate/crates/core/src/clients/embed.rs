//! Text embeddings with a deterministic lexical fallback.
//!
//! The fallback builds term-frequency vectors over word unigrams and
//! bigrams, weighted by inverse document frequency across the batch, and
//! L2-normalizes. It is not a semantic embedding, but it is deterministic
//! and order-preserving, which is what the diversity analytics need
//! offline.

use super::ClientError;
use std::collections::BTreeMap;

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError>;
}

/// Unigram+bigram tf-idf vectors, L2-normalized.
pub struct LexicalEmbedder;

impl Embedder for LexicalEmbedder {
    fn id(&self) -> &str {
        "lexical-tfidf"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        if texts.is_empty() {
            return Err(ClientError::Protocol("no texts to embed".into()));
        }
        let docs: Vec<Vec<String>> = texts.iter().map(|t| terms(t)).collect();

        // vocabulary in deterministic order, with document frequencies
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in &docs {
            let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let index: BTreeMap<&str, usize> = df
            .keys()
            .enumerate()
            .map(|(i, term)| (*term, i))
            .collect();
        let n = texts.len() as f64;

        let vectors = docs
            .iter()
            .map(|doc| {
                let mut v = vec![0.0; index.len()];
                for term in doc {
                    let i = index[term.as_str()];
                    let idf = 1.0 + (n / df[term.as_str()] as f64).ln();
                    v[i] += idf;
                }
                normalize(&mut v);
                v
            })
            .collect();
        Ok(vectors)
    }
}

fn terms(text: &str) -> Vec<String> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .collect();
    let mut out = words.clone();
    for pair in words.windows(2) {
        out.push(format!("{} {}", pair[0], pair[1]));
    }
    out
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Embeds through the service when one is supplied (L2-normalizing its
/// vectors), otherwise through the lexical fallback. Returns the vectors,
/// the embedder id used, and whether the fallback fired.
pub fn embed_or_fallback(
    texts: &[String],
    embedder: Option<&dyn Embedder>,
) -> (Vec<Vec<f64>>, String, bool) {
    if let Some(service) = embedder {
        if let Ok(mut vectors) = service.embed(texts) {
            for v in vectors.iter_mut() {
                normalize(v);
            }
            return (vectors, service.id().to_string(), false);
        }
    }
    let fallback = LexicalEmbedder;
    let vectors = fallback.embed(texts).unwrap_or_default();
    (vectors, fallback.id().to_string(), true)
}

/// Cosine distance between unit vectors: `1 - dot`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    1.0 - dot
}
