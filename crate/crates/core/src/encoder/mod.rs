//! Frozen text encoders and ID-indexed embedding tables.

mod hash;
mod table;

pub use hash::HashEncoder;
pub use table::EmbeddingTable;

use std::collections::BTreeMap;

use crate::par::*;
use crate::{Error, Result, Target};

/// A frozen text encoder. Implementations never expose mutable access to their parameters.
pub trait EncoderBackend: Send + Sync {
    fn dim(&self) -> usize;

    /// Maximum number of tokens encoded together.
    fn window(&self) -> usize;

    fn tokenize(&self, text: &str) -> Vec<String>;

    /// One vector per token of a single window.
    fn token_vectors(&self, tokens: &[String]) -> Result<Vec<Vec<f32>>, String>;

    /// Digest of every parameter the encoder holds.
    fn parameter_checksum(&self) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub vector: Vec<f32>,
    /// Set when there were no tokens and the vector is all zeros.
    pub empty: bool,
}

/// Element-wise mean of the token vectors.
pub fn pool(token_vectors: &[Vec<f32>], dim: usize) -> Pooled {
    if token_vectors.is_empty() {
        return Pooled {
            vector: vec![0.0; dim],
            empty: true,
        };
    }
    let mut acc = vec![0f64; dim];
    for v in token_vectors {
        for (a, &x) in acc.iter_mut().zip(v) {
            *a += x as f64;
        }
    }
    let n = token_vectors.len() as f64;
    Pooled {
        vector: acc.into_iter().map(|a| (a / n) as f32).collect(),
        empty: false,
    }
}

/// Encodes one text: chunks it into maximal windows, mean-pools each window, and averages the
/// window embeddings.
pub fn encode_text(text: &str, backend: &dyn EncoderBackend) -> Result<Pooled, String> {
    let tokens = backend.tokenize(text);
    let dim = backend.dim();
    if tokens.is_empty() {
        return Ok(pool(&[], dim));
    }
    let window = backend.window().max(1);
    let chunks = tokens
        .chunks(window)
        .map(|chunk| backend.token_vectors(chunk).map(|tv| pool(&tv, dim).vector))
        .collect::<Result<Vec<_>, String>>()?;
    Ok(pool(&chunks, dim))
}

/// Encodes every subject's text into an embedding table, one row per subject in id order.
pub fn encode_texts(
    texts: &BTreeMap<u32, String>,
    backend: &dyn EncoderBackend,
    target: Target,
) -> Result<EmbeddingTable> {
    if texts.is_empty() {
        return Err(Error::Config(format!("no {target} texts to encode")));
    }
    let entries: Vec<(&u32, &String)> = texts.iter().collect();
    let rows = entries
        .par_iter()
        .map(|(&id, text)| {
            encode_text(text, backend)
                .map(|p| (id, p.vector))
                .map_err(|message| Error::Encoder {
                    target,
                    subject: id,
                    message,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = EmbeddingTable::new(target, backend.dim());
    for (id, v) in rows {
        table.push(id, &v)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_cases() {
        assert_eq!(pool(&[vec![1.0, -2.0]], 2).vector, vec![1.0, -2.0]);
        assert_eq!(pool(&[vec![1.5, 2.0], vec![-1.5, -2.0]], 2).vector, vec![0.0, 0.0]);
        assert_eq!(pool(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2).vector, vec![0.5, 0.5]);
        let empty = pool(&[], 3);
        assert!(empty.empty);
        assert_eq!(empty.vector, vec![0.0; 3]);
    }

    #[test]
    fn identical_texts_identical_rows() {
        let enc = HashEncoder::new(16, 1024, 7);
        let texts: BTreeMap<u32, String> =
            [(1, "a space opera".to_string()), (2, "a space opera".to_string()), (3, "".to_string())]
                .into_iter()
                .collect();
        let t = encode_texts(&texts, &enc, Target::Item).unwrap();
        assert_eq!(t.row(1), t.row(2));
        assert_eq!(t.row(3).unwrap(), &[0.0; 16][..]);
        assert_eq!(t.zero_rows(), vec![3]);
    }

    #[test]
    fn empty_map_is_error() {
        let enc = HashEncoder::new(16, 1024, 7);
        assert!(encode_texts(&BTreeMap::new(), &enc, Target::User).is_err());
    }

    #[test]
    fn hash_stub_is_mean_of_token_rows() {
        let enc = HashEncoder::new(16, 512, 3);
        let text = "Dark dark comedy, about awards!";
        let tokens = ["dark", "dark", "comedy", "about", "awards"];
        let mut expected = vec![0f64; 16];
        for t in tokens {
            for (e, &x) in expected.iter_mut().zip(enc.row_for(t)) {
                *e += x as f64 / tokens.len() as f64;
            }
        }
        let got = encode_text(text, &enc).unwrap().vector;
        for (g, e) in got.iter().zip(&expected) {
            assert!((*g as f64 - e).abs() < 1e-6);
        }
    }

    #[test]
    fn long_text_averages_windows() {
        let enc = HashEncoder::new(8, 256, 1).with_window(2);
        let got = encode_text("a b c", &enc).unwrap().vector;
        let first = pool(&[enc.row_for("a").to_vec(), enc.row_for("b").to_vec()], 8).vector;
        let second = enc.row_for("c").to_vec();
        let expected = pool(&[first, second], 8).vector;
        assert_eq!(got, expected);
    }

    #[test]
    fn wide_backend_dim() {
        let enc = HashEncoder::new(768, 256, 0);
        let texts: BTreeMap<u32, String> = [(0, "hello".to_string())].into_iter().collect();
        assert_eq!(encode_texts(&texts, &enc, Target::User).unwrap().dim(), 768);
    }
}
