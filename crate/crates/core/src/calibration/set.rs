//! Calibration-set construction and the on-disk format:
//! `b"SCL1"`, a little-endian `u64` header length, a UTF-8 JSON header and
//! `N·L` little-endian `u32` token ids.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generate::generate_example;
use super::schedule::TemperatureSchedule;
use crate::error::{require, Error, Result};
use crate::tiny_lm::{LanguageModel, TokenId, Tokenizer, BOS, PAD};

pub const CALIB_MAGIC: &[u8; 4] = b"SCL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[serde(rename = "self")]
    SelfGenerated,
    Corpus,
    RandomVocab,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::SelfGenerated => "self",
            SourceKind::Corpus => "corpus",
            SourceKind::RandomVocab => "random_vocab",
        }
    }
}

impl std::str::FromStr for SourceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self" => Ok(SourceKind::SelfGenerated),
            "corpus" => Ok(SourceKind::Corpus),
            "random_vocab" => Ok(SourceKind::RandomVocab),
            other => Err(Error::Contract(format!("unknown calibration source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub source: SourceKind,
    pub num_examples: usize,
    pub example_len: usize,
    pub seed: u64,
    /// Self-generation only.
    #[serde(default)]
    pub schedule: Option<TemperatureSchedule>,
    /// Self-generation only.
    #[serde(default)]
    pub stopword_constraint: bool,
    /// Corpus source only; recorded for provenance.
    #[serde(default)]
    pub corpus_path: Option<String>,
}

impl CalibrationSpec {
    pub fn new(source: SourceKind, seed: u64) -> Self {
        Self {
            source,
            num_examples: 128,
            example_len: 2048,
            seed,
            schedule: (source == SourceKind::SelfGenerated).then(TemperatureSchedule::default),
            stopword_constraint: false,
            corpus_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.num_examples >= 1, || "num_examples must be >= 1".into())?;
        require(self.example_len >= 1, || "example_len must be >= 1".into())?;
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub spec: CalibrationSpec,
    pub examples: Vec<Vec<TokenId>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileHeader {
    spec: CalibrationSpec,
    tokenizer: String,
    num_examples: usize,
    example_len: usize,
    generator: String,
}

/// RNG for example `index` of a set with `seed`; independent of the order
/// in which examples are produced.
pub fn example_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"selfcal/calibration");
    h.update(seed.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

impl CalibrationSet {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn example_len(&self) -> usize {
        self.spec.example_len
    }

    /// The first `n` examples, as used by the quantity ablation.
    pub fn prefix(&self, n: usize) -> Result<CalibrationSet> {
        require(n >= 1 && n <= self.examples.len(), || {
            format!("prefix of {n} from a set of {}", self.examples.len())
        })?;
        let mut spec = self.spec.clone();
        spec.num_examples = n;
        Ok(CalibrationSet {
            spec,
            examples: self.examples[..n].to_vec(),
        })
    }

    /// Checks the structural invariants of a set.
    pub fn validate(&self) -> Result<()> {
        require(self.examples.len() == self.spec.num_examples, || {
            "example count disagrees with spec".into()
        })?;
        for (i, ex) in self.examples.iter().enumerate() {
            require(ex.len() == self.spec.example_len, || {
                format!("example {i} has length {}", ex.len())
            })?;
            require(!ex.contains(&PAD), || format!("example {i} contains PAD"))?;
            if self.spec.source == SourceKind::SelfGenerated {
                require(ex[0] == BOS, || format!("example {i} does not start with BOS"))?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = FileHeader {
            spec: self.spec.clone(),
            tokenizer: Tokenizer::new().fingerprint(),
            num_examples: self.examples.len(),
            example_len: self.spec.example_len,
            generator: concat!("selfcal ", env!("CARGO_PKG_VERSION")).to_string(),
        };
        let header = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.examples.len() * self.spec.example_len);
        out.extend_from_slice(CALIB_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for ex in &self.examples {
            for &t in ex {
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CalibrationSet> {
        let bad = |m: &str| Error::CalibFormat(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != CALIB_MAGIC {
            return Err(bad("missing SCL1 magic"));
        }
        let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let start = 12usize.checked_add(hlen).ok_or_else(|| bad("header length overflow"))?;
        if bytes.len() < start {
            return Err(bad("truncated header"));
        }
        let header: FileHeader = serde_json::from_slice(&bytes[12..start])?;
        if header.tokenizer != Tokenizer::new().fingerprint() {
            return Err(bad("tokenizer fingerprint mismatch"));
        }
        let payload = &bytes[start..];
        let n = header.num_examples;
        let l = header.example_len;
        if payload.len() != n * l * 4 {
            return Err(Error::CalibFormat(format!(
                "payload holds {} bytes, header implies {}",
                payload.len(),
                n * l * 4
            )));
        }
        let ids: Vec<TokenId> = payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let set = CalibrationSet {
            spec: header.spec,
            examples: ids.chunks(l.max(1)).map(<[u32]>::to_vec).collect(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CalibrationSet> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Self-calibration: `N` independent BOS-conditioned generations.
pub fn build_self_set<M: LanguageModel>(model: &M, spec: &CalibrationSpec) -> Result<CalibrationSet> {
    spec.validate()?;
    require(spec.source == SourceKind::SelfGenerated, || "spec is not a self source".into())?;
    let schedule = spec.schedule.unwrap_or_default();
    let constraint = spec
        .stopword_constraint
        .then(|| Tokenizer::new().stopword_first_token_ids());
    let examples = (0..spec.num_examples)
        .into_par_iter()
        .map(|i| {
            let mut rng = example_rng(spec.seed, i);
            generate_example(model, &schedule, spec.example_len, &mut rng, constraint.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationSet {
        spec: CalibrationSpec {
            schedule: Some(schedule),
            ..spec.clone()
        },
        examples,
    })
}

/// Real-data baseline: `N` windows of `L` consecutive corpus tokens at
/// uniformly drawn offsets in `[0, len - L]`.
pub fn build_corpus_set(corpus: &[TokenId], spec: &CalibrationSpec) -> Result<CalibrationSet> {
    spec.validate()?;
    let l = spec.example_len;
    if corpus.len() < l {
        return Err(Error::CorpusTooSmall {
            len: corpus.len(),
            need: l,
        });
    }
    let examples = (0..spec.num_examples)
        .map(|i| {
            let off = example_rng(spec.seed, i).gen_range(0..=corpus.len() - l);
            corpus[off..off + l].to_vec()
        })
        .collect();
    Ok(CalibrationSet {
        spec: spec.clone(),
        examples,
    })
}

/// Random-vocabulary baseline: i.i.d. uniform draws over non-special ids.
pub fn build_random_vocab_set(vocab_size: usize, spec: &CalibrationSpec) -> Result<CalibrationSet> {
    spec.validate()?;
    let ids: Vec<TokenId> = (0..vocab_size as TokenId)
        .filter(|&t| !Tokenizer::is_special(t))
        .collect();
    require(!ids.is_empty(), || "vocabulary has no ordinary tokens".into())?;
    let examples = (0..spec.num_examples)
        .map(|i| {
            let mut rng = example_rng(spec.seed, i);
            (0..spec.example_len)
                .map(|_| ids[rng.gen_range(0..ids.len())])
                .collect()
        })
        .collect();
    Ok(CalibrationSet {
        spec: spec.clone(),
        examples,
    })
}

/// Dispatches on `spec.source`; `model` is required for self-generation and
/// `corpus` for corpus sampling.
pub fn build_calibration_set<M: LanguageModel>(
    spec: &CalibrationSpec,
    model: Option<&M>,
    corpus: Option<&[TokenId]>,
) -> Result<CalibrationSet> {
    match spec.source {
        SourceKind::SelfGenerated => {
            let m = model.ok_or_else(|| Error::Contract("self source needs a model".into()))?;
            build_self_set(m, spec)
        }
        SourceKind::Corpus => {
            let c = corpus.ok_or_else(|| Error::Contract("corpus source needs a corpus".into()))?;
            build_corpus_set(c, spec)
        }
        SourceKind::RandomVocab => {
            let vocab = model.map_or(crate::tiny_lm::VOCAB_SIZE, |m| m.vocab_size());
            build_random_vocab_set(vocab, spec)
        }
    }
}
