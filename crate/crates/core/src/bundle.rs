//! Versioned binary container for one classifier: vocabulary, network
//! parameters, head names and training metadata.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LLMG"
//! 4       4     format_version: u32 (= 1)
//! 8       4     header_len: u32
//! 12      H     header: UTF-8 text, one `key=value` per line, `\n` terminated
//! ...           vocabulary: per token, u32 byte length then UTF-8 bytes
//! ...           parameters: per layer, weights (outputs x inputs, row-major) then bias, f64 each
//! ```
//!
//! Header keys, in this order: `dims` (comma separated `[input, hidden.., output]`),
//! `vocab_max_size`, `vocab_min_count`, one `head` line per output, `seed`,
//! `epochs`, `final_loss`. Trailing bytes after the last parameter are rejected.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::mlp::{Mlp, ShapeError};
use crate::text::{vectorize, Vocabulary, VocabularyError};

pub const MAGIC: &[u8; 4] = b"LLMG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error("not a model bundle (bad magic bytes)")]
    BadMagic,
    #[error("unsupported bundle format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("corrupt bundle at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("bundle has {heads} head names but the model has {outputs} outputs")]
    HeadCount { heads: usize, outputs: usize },
    #[error("vocabulary has {vocab} tokens but the model expects {inputs} inputs")]
    InputDim { vocab: usize, inputs: usize },
    #[error("invalid head name {0:?}")]
    HeadName(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Vocabulary(#[from] VocabularyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: u32,
    pub final_loss: f64,
}

/// Everything needed to score text with one classifier detector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    vocabulary: Vocabulary,
    model: Mlp,
    head_names: Vec<String>,
    meta: TrainingMeta,
}

impl ModelBundle {
    pub fn new(
        vocabulary: Vocabulary,
        model: Mlp,
        head_names: Vec<String>,
        meta: TrainingMeta,
    ) -> Result<Self, BundleError> {
        if head_names.len() != model.output_dim() {
            return Err(BundleError::HeadCount { heads: head_names.len(), outputs: model.output_dim() });
        }
        if vocabulary.len() != model.input_dim() {
            return Err(BundleError::InputDim { vocab: vocabulary.len(), inputs: model.input_dim() });
        }
        if let Some(bad) = head_names.iter().find(|h| h.is_empty() || h.contains(['\n', '\r', '='])) {
            return Err(BundleError::HeadName(bad.clone()));
        }
        Ok(ModelBundle { vocabulary, model, head_names, meta })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn head_names(&self) -> &[String] {
        &self.head_names
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Probability per head for `text`.
    pub fn head_scores(&self, text: &str) -> Vec<f64> {
        self.scores_for_counts(&vectorize(text, &self.vocabulary))
    }

    /// Detector score: the maximum head probability.
    pub fn score(&self, text: &str) -> f64 {
        self.score_counts(&vectorize(text, &self.vocabulary))
    }

    pub(crate) fn scores_for_counts(&self, counts: &[f64]) -> Vec<f64> {
        self.model.forward(counts).expect("vocabulary size matches model input")
    }

    pub(crate) fn score_counts(&self, counts: &[f64]) -> f64 {
        self.scores_for_counts(counts).into_iter().fold(0.0, f64::max)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut header = String::new();
        let dims: Vec<String> = self.model.dims().iter().map(ToString::to_string).collect();
        header.push_str(&format!("dims={}\n", dims.join(",")));
        header.push_str(&format!("vocab_max_size={}\n", self.vocabulary.max_size()));
        header.push_str(&format!("vocab_min_count={}\n", self.vocabulary.min_count()));
        for head in &self.head_names {
            header.push_str(&format!("head={head}\n"));
        }
        header.push_str(&format!("seed={}\n", self.meta.seed));
        header.push_str(&format!("epochs={}\n", self.meta.epochs));
        // `Display` for f64 prints the shortest text that parses back to the same bits.
        header.push_str(&format!("final_loss={}\n", self.meta.final_loss));

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for token in self.vocabulary.tokens() {
            out.extend_from_slice(&(token.len() as u32).to_le_bytes());
            out.extend_from_slice(token.as_bytes());
        }
        for layer in self.model.layers() {
            for w in layer.weights().iter().chain(layer.bias()) {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, BundleError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| BundleError::BadMagic)? != MAGIC {
            return Err(BundleError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(BundleError::UnsupportedVersion(version));
        }
        let header_len = r.u32()? as usize;
        let header_start = r.pos;
        let header = core::str::from_utf8(r.take(header_len)?)
            .map_err(|e| r.error_at(header_start + e.valid_up_to(), "header is not UTF-8"))?;
        let header = Header::parse(header, header_start)?;

        let input_dim = header.dims[0];
        let mut tokens = Vec::with_capacity(input_dim.min(bytes.len() / 4));
        for _ in 0..input_dim {
            let len = r.u32()? as usize;
            let at = r.pos;
            let raw = r.take(len)?;
            let token = core::str::from_utf8(raw).map_err(|_| r.error_at(at, "token is not UTF-8"))?;
            tokens.push(token.to_string());
        }
        let vocabulary = Vocabulary::from_tokens(tokens, header.max_size, header.min_count)?;

        let mut params = Vec::with_capacity(header.dims.len() - 1);
        for pair in header.dims.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let weights = r.f64s(inputs.checked_mul(outputs).ok_or_else(|| r.error_at(r.pos, "layer too large"))?)?;
            let bias = r.f64s(outputs)?;
            params.push((weights, bias));
        }
        if r.pos != bytes.len() {
            return Err(r.error_at(r.pos, "trailing bytes after parameters"));
        }
        let model = Mlp::from_parameters(&header.dims, params)?;
        ModelBundle::new(vocabulary, model, header.heads, header.meta)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error_at(&self, offset: usize, message: &str) -> BundleError {
        BundleError::Parse { offset, message: message.to_string() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(self.error_at(self.pos, &format!("truncated: needed {n} more bytes"))),
        }
    }

    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, BundleError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.error_at(self.pos, "layer too large"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

struct Header {
    dims: Vec<usize>,
    max_size: usize,
    min_count: usize,
    heads: Vec<String>,
    meta: TrainingMeta,
}

impl Header {
    fn parse(text: &str, base: usize) -> Result<Self, BundleError> {
        let mut dims = None;
        let mut max_size = None;
        let mut min_count = None;
        let mut heads = Vec::new();
        let mut seed = None;
        let mut epochs = None;
        let mut final_loss = None;

        let mut offset = base;
        for line in text.split_terminator('\n') {
            let fail = |message: &str| BundleError::Parse { offset, message: message.to_string() };
            let (key, value) = line.split_once('=').ok_or_else(|| fail("header line without `=`"))?;
            match key {
                "dims" => {
                    let parsed: Result<Vec<usize>, _> = value.split(',').map(str::parse).collect();
                    let parsed = parsed.map_err(|_| fail("bad dims"))?;
                    if parsed.len() < 2 {
                        return Err(fail("dims needs at least input and output"));
                    }
                    dims = Some(parsed);
                }
                "vocab_max_size" => max_size = Some(value.parse().map_err(|_| fail("bad vocab_max_size"))?),
                "vocab_min_count" => min_count = Some(value.parse().map_err(|_| fail("bad vocab_min_count"))?),
                "head" => heads.push(value.to_string()),
                "seed" => seed = Some(value.parse().map_err(|_| fail("bad seed"))?),
                "epochs" => epochs = Some(value.parse().map_err(|_| fail("bad epochs"))?),
                "final_loss" => final_loss = Some(value.parse().map_err(|_| fail("bad final_loss"))?),
                _ => return Err(fail("unknown header key")),
            }
            offset += line.len() + 1;
        }
        let end = base + text.len();
        let missing = |key: &str| BundleError::Parse { offset: end, message: format!("header missing `{key}`") };
        Ok(Header {
            dims: dims.ok_or_else(|| missing("dims"))?,
            max_size: max_size.ok_or_else(|| missing("vocab_max_size"))?,
            min_count: min_count.ok_or_else(|| missing("vocab_min_count"))?,
            heads,
            meta: TrainingMeta {
                seed: seed.ok_or_else(|| missing("seed"))?,
                epochs: epochs.ok_or_else(|| missing("epochs"))?,
                final_loss: final_loss.ok_or_else(|| missing("final_loss"))?,
            },
        })
    }
}
