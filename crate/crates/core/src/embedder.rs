//! Caption embeddings: a deterministic hashed-feature embedder plus a loader
//! for externally computed vectors (e.g. transformer sentence embeddings).
//!
//! The built-in embedder hashes word unigrams, word bigrams, and per-token
//! character trigrams into 256 signed buckets, TF-weights them, and
//! L2-normalizes. It is a pure function of the token sequence, so identical
//! captions always share a vector and cosine ranking is stable across
//! platforms.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::seeds;
use crate::types::caption_key;

/// Embedding dimension of the built-in embedder.
pub const EMBED_DIM: usize = 256;

/// Fixed salt so hashed feature positions never drift between builds.
const HASH_SEED: u64 = 0x5EED;

/// A unit-norm semantic vector for one caption.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionEmbedding {
    pub vector: Vec<f64>,
    pub caption_key: String,
}

/// Anything that can embed a caption. Implementations must be pure: the same
/// tokens always produce the same vector.
pub trait CaptionEmbedder: Send + Sync {
    fn embed(&self, tokens: &[String]) -> Result<CaptionEmbedding>;
}

/// The built-in hashed n-gram embedder.
#[derive(Debug, Clone, Default)]
pub struct HashingEmbedder;

impl CaptionEmbedder for HashingEmbedder {
    fn embed(&self, tokens: &[String]) -> Result<CaptionEmbedding> {
        embed_caption(tokens)
    }
}

fn bump(vector: &mut [f64], feature: &str) {
    let h = seeds::mix(&[HASH_SEED, seeds::hash_str(feature)]);
    let bucket = (h % EMBED_DIM as u64) as usize;
    let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
    vector[bucket] += sign;
}

/// Embed one caption. Errors on an empty token list.
pub fn embed_caption(tokens: &[String]) -> Result<CaptionEmbedding> {
    if tokens.is_empty() {
        return Err(CoreError::data("cannot embed an empty caption"));
    }
    let mut vector = vec![0.0; EMBED_DIM];
    for tok in tokens {
        bump(&mut vector, &format!("u:{tok}"));
        let chars: Vec<char> = tok.chars().collect();
        if chars.len() < 3 {
            bump(&mut vector, &format!("c:{tok}"));
        } else {
            for w in chars.windows(3) {
                let tri: String = w.iter().collect();
                bump(&mut vector, &format!("c:{tri}"));
            }
        }
    }
    for pair in tokens.windows(2) {
        bump(&mut vector, &format!("b:{} {}", pair[0], pair[1]));
    }
    normalize(&mut vector);
    Ok(CaptionEmbedding {
        vector,
        caption_key: caption_key(tokens),
    })
}

fn normalize(vector: &mut [f64]) {
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in vector.iter_mut() {
            *x /= norm;
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Caption embeddings loaded from a file, looked up by canonical caption key.
#[derive(Debug, Clone, Default)]
pub struct FileEmbeddings {
    map: BTreeMap<String, CaptionEmbedding>,
    dim: Option<usize>,
}

impl FileEmbeddings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert one row. Vectors are re-normalized to unit L2; a duplicate key
    /// is accepted only if its vector matches the stored one.
    pub fn insert(&mut self, caption_key: String, mut vector: Vec<f64>) -> Result<()> {
        if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::data(format!(
                "bad embedding vector for caption: {caption_key}"
            )));
        }
        match self.dim {
            None => self.dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(CoreError::data(format!(
                    "embedding dimension mismatch: expected {d}, got {} for {caption_key}",
                    vector.len()
                )));
            }
            Some(_) => {}
        }
        normalize(&mut vector);
        if let Some(existing) = self.map.get(&caption_key) {
            let same = existing
                .vector
                .iter()
                .zip(&vector)
                .all(|(a, b)| (a - b).abs() <= 1e-9);
            if !same {
                return Err(CoreError::data(format!(
                    "duplicate caption with differing vector: {caption_key}"
                )));
            }
            return Ok(());
        }
        self.map.insert(
            caption_key.clone(),
            CaptionEmbedding {
                vector,
                caption_key,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&CaptionEmbedding> {
        self.map.get(key)
    }
}

impl CaptionEmbedder for FileEmbeddings {
    fn embed(&self, tokens: &[String]) -> Result<CaptionEmbedding> {
        let key = caption_key(tokens);
        self.map
            .get(&key)
            .cloned()
            .ok_or_else(|| CoreError::data(format!("no stored embedding for caption: {key}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::tokenize;

    #[test]
    fn identical_captions_share_a_vector() {
        let a = embed_caption(&tokenize("a man is running")).unwrap();
        let b = embed_caption(&tokenize("a man is running")).unwrap();
        assert_eq!(a.vector, b.vector);
        assert!((cosine(&a.vector, &b.vector) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vectors_are_unit_norm() {
        for caption in ["a", "dog", "a man is running very fast today"] {
            let e = embed_caption(&tokenize(caption)).unwrap();
            let norm = e.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "norm {norm} for {caption}");
        }
    }

    #[test]
    fn paraphrase_is_closer_than_unrelated_text() {
        let anchor = embed_caption(&tokenize("a man is running")).unwrap();
        let para = embed_caption(&tokenize("a person is jogging")).unwrap();
        let far = embed_caption(&tokenize("stock market charts rise")).unwrap();
        let close = cosine(&anchor.vector, &para.vector);
        let distant = cosine(&anchor.vector, &far.vector);
        assert!(
            distant < close,
            "expected unrelated ({distant}) < paraphrase ({close})"
        );
    }

    #[test]
    fn word_order_matters_through_bigrams() {
        let a = embed_caption(&tokenize("dog bites man")).unwrap();
        let b = embed_caption(&tokenize("man bites dog")).unwrap();
        assert_ne!(a.vector, b.vector);
    }

    #[test]
    fn empty_caption_is_an_error() {
        assert!(embed_caption(&[]).is_err());
    }

    #[test]
    fn file_embeddings_normalize_and_deduplicate() {
        let mut store = FileEmbeddings::new();
        store.insert("a b".into(), vec![3.0, 4.0]).unwrap();
        store.insert("c d".into(), vec![1.0, 0.0]).unwrap();
        // Exact duplicate row is fine.
        store.insert("a b".into(), vec![3.0, 4.0]).unwrap();
        assert_eq!(store.len(), 2);
        let e = store.get("a b").unwrap();
        assert!((e.vector[0] - 0.6).abs() < 1e-12);
        assert!((e.vector[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn file_embeddings_reject_conflicts() {
        let mut store = FileEmbeddings::new();
        store.insert("a".into(), vec![1.0, 0.0]).unwrap();
        assert!(store.insert("a".into(), vec![0.0, 1.0]).is_err());
        assert!(store.insert("b".into(), vec![1.0, 0.0, 0.0]).is_err());
    }
}
