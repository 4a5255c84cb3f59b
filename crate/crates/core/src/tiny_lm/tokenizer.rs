//! Byte-level tokenizer: ids 0..=255 are raw bytes, followed by three specials.

use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

pub type TokenId = u32;

pub const BYTE_VOCAB: usize = 256;
pub const BOS: TokenId = 256;
pub const EOS: TokenId = 257;
pub const PAD: TokenId = 258;
pub const VOCAB_SIZE: usize = 259;

const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokenizer;

impl Tokenizer {
    pub fn new() -> Self {
        Tokenizer
    }

    pub fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn special_ids(&self) -> [TokenId; 3] {
        [BOS, EOS, PAD]
    }

    pub fn is_special(id: TokenId) -> bool {
        id as usize >= BYTE_VOCAB
    }

    pub fn encode(&self, text: &[u8]) -> Vec<TokenId> {
        text.iter().map(|&b| TokenId::from(b)).collect()
    }

    /// Inverse of [`Tokenizer::encode`]; special ids are skipped.
    pub fn decode(&self, tokens: &[TokenId]) -> Vec<u8> {
        tokens
            .iter()
            .filter(|&&t| !Self::is_special(t))
            .map(|&t| t as u8)
            .collect()
    }

    /// Splits on blank lines and emits each non-empty document as `BOS bytes… EOS`.
    pub fn encode_documents(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(text.len() + text.len() / 64);
        for doc in text.split("\n\n") {
            let doc = doc.trim_matches('\n');
            if doc.trim().is_empty() {
                continue;
            }
            out.push(BOS);
            out.extend(self.encode(doc.as_bytes()));
            out.push(EOS);
        }
        out
    }

    /// Bundled English stop words.
    pub fn stopwords(&self) -> impl Iterator<Item = &'static str> {
        STOPWORDS.lines().map(str::trim).filter(|w| !w.is_empty())
    }

    /// Token ids permitted at the first generation step under the stop-word
    /// constraint: the first byte of every bundled stop word.
    pub fn stopword_first_token_ids(&self) -> BTreeSet<TokenId> {
        self.stopwords()
            .map(|w| TokenId::from(w.as_bytes()[0]))
            .collect()
    }

    /// Stable identifier stored in calibration files.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("byte-level;vocab={VOCAB_SIZE};bos={BOS};eos={EOS};pad={PAD};"));
        h.update(STOPWORDS.as_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_identity() {
        let t = Tokenizer::new();
        assert!(t.encode(b"").is_empty());
        assert!(t.decode(&[]).is_empty());
        assert_eq!(t.encode(b"ab"), vec![97, 98]);
        assert_eq!(t.decode(&[BOS, 97, EOS, 98, PAD]), b"ab".to_vec());
    }

    #[test]
    fn documents_are_delimited() {
        let t = Tokenizer::new();
        let ids = t.encode_documents("ab\n\n\n\ncd\n");
        assert_eq!(ids, vec![BOS, 97, 98, EOS, BOS, 99, 100, EOS]);
    }

    #[test]
    fn stopword_first_bytes_are_lowercase_letters() {
        let ids = Tokenizer::new().stopword_first_token_ids();
        assert!(ids.contains(&u32::from(b't')));
        assert!(ids.iter().all(|&i| (u32::from(b'a')..=u32::from(b'z')).contains(&i)));
    }

    proptest! {
        #[test]
        fn round_trip(bytes in prop::collection::vec(any::<u8>(), 0..1024)) {
            let t = Tokenizer::new();
            let ids = t.encode(&bytes);
            prop_assert!(ids.iter().all(|&i| !Tokenizer::is_special(i)));
            prop_assert_eq!(t.decode(&ids), bytes);
        }
    }
}
