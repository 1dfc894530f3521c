//! Context corpora, token-window chunking, and decomposition into atomic
//! context units.

use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend, GenerationRequest, SamplingParams};
use crate::jsonl::{self, Provenance};
use crate::prompts;
use crate::tokenize::Tokenizer;

pub const DEFAULT_CHUNK_TOKENS: usize = 8192;
pub const DEFAULT_OVERLAP_TOKENS: usize = 512;
pub const UNIT_DELIMITER: &str = "###";

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("corpus is empty or has no tokens")]
    EmptyCorpus,
    #[error("overlap of {overlap} tokens must be smaller than the chunk size of {chunk} tokens")]
    InvalidChunking { chunk: usize, overlap: usize },
    #[error("decomposition of chunk {chunk} failed: {source}")]
    Backend {
        chunk: usize,
        #[source]
        source: BackendError,
    },
    #[error("units file: {0}")]
    Io(#[from] std::io::Error),
    #[error("units file contains no unit records")]
    NoUnits,
}

#[derive(Debug, Clone)]
pub struct ContextCorpus {
    pub corpus_id: String,
    pub raw_text: String,
    pub token_count: usize,
    /// `boundaries[j]` is the byte offset where token `j`'s share of the text
    /// begins; `boundaries[token_count] == raw_text.len()`. Token 0 owns any
    /// leading whitespace, every other token owns the whitespace before it.
    boundaries: Vec<usize>,
}

impl ContextCorpus {
    pub fn new(
        corpus_id: impl Into<String>,
        raw_text: impl Into<String>,
        tokenizer: &dyn Tokenizer,
    ) -> Result<Self, ContextError> {
        let raw_text = raw_text.into();
        let spans = tokenizer.spans(&raw_text);
        if raw_text.is_empty() || spans.is_empty() {
            return Err(ContextError::EmptyCorpus);
        }
        let mut boundaries: Vec<usize> = spans.iter().map(|s| s.start).collect();
        boundaries[0] = 0;
        boundaries.push(raw_text.len());
        Ok(Self {
            corpus_id: corpus_id.into(),
            token_count: spans.len(),
            raw_text,
            boundaries,
        })
    }

    fn byte_range(&self, tokens: &Range<usize>) -> Range<usize> {
        self.boundaries[tokens.start]..self.boundaries[tokens.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    pub token_range: Range<usize>,
    pub byte_range: Range<usize>,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkingConfig {
    pub chunk_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_tokens: DEFAULT_CHUNK_TOKENS,
            overlap_tokens: DEFAULT_OVERLAP_TOKENS,
        }
    }
}

/// Token-window chunking: chunk `i` covers
/// `[i*stride, min(i*stride + chunk_tokens, token_count))` with
/// `stride = chunk_tokens - overlap_tokens`, stopping once a chunk reaches the end.
pub fn chunk_corpus(corpus: &ContextCorpus, config: ChunkingConfig) -> Result<Vec<Chunk>, ContextError> {
    let ChunkingConfig {
        chunk_tokens,
        overlap_tokens,
    } = config;
    if chunk_tokens == 0 || overlap_tokens >= chunk_tokens {
        return Err(ContextError::InvalidChunking {
            chunk: chunk_tokens,
            overlap: overlap_tokens,
        });
    }
    if corpus.token_count == 0 {
        return Err(ContextError::EmptyCorpus);
    }
    let stride = chunk_tokens - overlap_tokens;
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + chunk_tokens).min(corpus.token_count);
        let token_range = start..end;
        let byte_range = corpus.byte_range(&token_range);
        chunks.push(Chunk {
            index: chunks.len(),
            text: corpus.raw_text[byte_range.clone()].to_string(),
            token_range,
            byte_range,
        });
        if end == corpus.token_count {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

/// Concatenates chunk texts, dropping each chunk's overlap with its predecessor.
pub fn reassemble(chunks: &[Chunk]) -> String {
    let mut out = String::new();
    let mut covered = 0usize;
    for c in chunks {
        let skip = covered.saturating_sub(c.byte_range.start);
        out.push_str(&c.text[skip.min(c.text.len())..]);
        covered = covered.max(c.byte_range.end);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextUnit {
    pub unit_id: usize,
    pub source_chunk: usize,
    pub text: String,
}

fn enumeration_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d{1,3}[.)]|[-•*])\s+").expect("valid regex"))
}

fn strip_markers(item: &str) -> &str {
    let mut s = item;
    while let Some(m) = enumeration_marker().find(s) {
        s = s[m.end()..].trim_start();
    }
    s
}

/// Splits a decomposition reply into item texts.
///
/// Items are separated by lines that consist only of `###` (surrounding
/// whitespace ignored). Each item is trimmed, stripped of leading enumeration
/// markers such as `1.`, `-` or `•`, and dropped if empty.
pub fn parse_units(raw: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut flush = |lines: &mut Vec<&str>| {
        let joined = lines.join("\n");
        let item = strip_markers(joined.trim()).trim();
        if !item.is_empty() && item != UNIT_DELIMITER {
            items.push(item.to_string());
        }
        lines.clear();
    };
    for line in raw.lines() {
        if line.trim() == UNIT_DELIMITER {
            flush(&mut current);
        } else {
            current.push(line);
        }
    }
    flush(&mut current);
    items
}

/// Default sampling for decomposition requests.
pub fn decomposition_params(seed: u64) -> SamplingParams {
    SamplingParams::new(0.0, 8192).with_seed(seed)
}

/// Sends one decomposition request for `chunk` and returns the parsed item texts.
pub fn request_units(
    chunk: &Chunk,
    backend: &dyn GenerationBackend,
    params: &SamplingParams,
) -> Result<Vec<String>, ContextError> {
    let request = GenerationRequest {
        prompt: prompts::decomposition_prompt(&chunk.text),
        params: params.clone(),
    };
    let reply = backend
        .generate(&request)
        .map_err(|source| ContextError::Backend {
            chunk: chunk.index,
            source,
        })?;
    let items = parse_units(&reply.text);
    if items.is_empty() {
        log::warn!("chunk {}: decomposition produced no units", chunk.index);
    }
    Ok(items)
}

/// Decomposes one chunk, assigning ids from `next_id` onwards.
pub fn decompose(
    chunk: &Chunk,
    backend: &dyn GenerationBackend,
    params: &SamplingParams,
    next_id: &mut usize,
) -> Result<Vec<ContextUnit>, ContextError> {
    let items = request_units(chunk, backend, params)?;
    Ok(assign_ids(chunk.index, items, next_id))
}

fn assign_ids(source_chunk: usize, items: Vec<String>, next_id: &mut usize) -> Vec<ContextUnit> {
    items
        .into_iter()
        .map(|text| {
            let unit = ContextUnit {
                unit_id: *next_id,
                source_chunk,
                text,
            };
            *next_id += 1;
            unit
        })
        .collect()
}

/// Decomposes every chunk with up to `workers` requests in flight, then
/// assigns dense ids in chunk order.
///
/// Duplicate units from overlapping chunk regions are kept.
pub fn decompose_all(
    chunks: &[Chunk],
    backend: &dyn GenerationBackend,
    params: &SamplingParams,
    workers: usize,
) -> Result<Vec<ContextUnit>, ContextError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let replies: Vec<Result<Vec<String>, ContextError>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|c| request_units(c, backend, params))
            .collect()
    });
    let mut next_id = 0;
    let mut units = Vec::new();
    for (chunk, reply) in chunks.iter().zip(replies) {
        units.extend(assign_ids(chunk.index, reply?, &mut next_id));
    }
    Ok(units)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum UnitsRecord {
    Meta(Provenance),
    Unit(ContextUnit),
}

pub fn write_units(path: &Path, provenance: &Provenance, units: &[ContextUnit]) -> Result<(), ContextError> {
    let mut w = jsonl::RecordWriter::create(path)?;
    w.write(&UnitsRecord::Meta(provenance.clone()))?;
    for u in units {
        w.write(&UnitsRecord::Unit(u.clone()))?;
    }
    Ok(())
}

pub fn read_units(path: &Path) -> Result<Vec<ContextUnit>, ContextError> {
    let units: Vec<ContextUnit> = jsonl::read_records::<UnitsRecord>(path)?
        .into_iter()
        .filter_map(|r| match r {
            UnitsRecord::Unit(u) => Some(u),
            UnitsRecord::Meta(_) => None,
        })
        .collect();
    if units.is_empty() {
        return Err(ContextError::NoUnits);
    }
    Ok(units)
}
