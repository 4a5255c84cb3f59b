//! The bundled text corpus and its deterministic train/held-out split.

use super::tokenizer::{TokenId, Tokenizer};

/// About 1 MB of English prose (Python reference-manual topics, library
/// docstrings and standard licence texts).
pub const BUNDLED_CORPUS: &str = include_str!("../../data/corpus.txt");

/// Every `HELDOUT_EVERY`-th document goes to the held-out split.
pub const HELDOUT_EVERY: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<TokenId>,
    pub heldout: Vec<TokenId>,
}

/// Tokenizes `text` document by document (blank-line separated) and routes
/// documents `HELDOUT_EVERY-1, 2·HELDOUT_EVERY-1, …` to the held-out stream.
pub fn split_corpus(text: &str) -> CorpusSplit {
    let tok = Tokenizer::new();
    let mut split = CorpusSplit {
        train: Vec::new(),
        heldout: Vec::new(),
    };
    let docs = text
        .split("\n\n")
        .filter(|d| !d.trim().is_empty());
    for (i, doc) in docs.enumerate() {
        let ids = tok.encode_documents(doc);
        if (i + 1) % HELDOUT_EVERY == 0 {
            split.heldout.extend(ids);
        } else {
            split.train.extend(ids);
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_complete() {
        let text: String = (0..40).map(|i| format!("doc {i}\n\n")).collect();
        let s = split_corpus(&text);
        let all = Tokenizer::new().encode_documents(&text);
        assert_eq!(s.train.len() + s.heldout.len(), all.len());
        let held = String::from_utf8(Tokenizer::new().decode(&s.heldout)).unwrap();
        assert_eq!(held, "doc 19doc 39");
    }

    #[test]
    fn bundled_corpus_is_large() {
        let s = split_corpus(BUNDLED_CORPUS);
        assert!(s.train.len() > 800_000);
        assert!(s.heldout.len() > 30_000);
    }
}
