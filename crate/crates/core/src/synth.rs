//! Synthetic query generation.
//!
//! Per example: a base-completion model picks a seed subset of context units,
//! an instruct model writes a query those units apply to, every unit is
//! verified against the query, and the teacher is rolled out on the query
//! plus the context chosen by the [`Mode`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    derive_seed, BackendError, CachedBackend, GenerationBackend, GenerationRequest, SamplingParams,
    TokenLogprobs,
};
use crate::context::{self, ChunkingConfig, ContextCorpus, ContextError, ContextUnit};
use crate::jsonl::{self, Provenance};
use crate::prompts;

pub const MATCH_THRESHOLD: f64 = 0.8;
pub const SEED_RETRIES: usize = 3;
pub const QUERY_RETRIES: usize = 3;
pub const SKIP_BUDGET: f64 = 0.10;

// Stage labels mixed into per-request seeds.
const STAGE_SEED: u64 = 1;
const STAGE_QUERY: u64 = 2;
const STAGE_VERIFY: u64 = 3;
const STAGE_ROLLOUT: u64 = 4;
const STAGE_CHUNK_PICK: u64 = 5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("no unit matched the seed selection after {attempts} attempts")]
    NoSeedMatch { attempts: usize },
    #[error("every generated query was rejected after {attempts} attempts (last reply {last:?})")]
    QueryRejected { attempts: usize, last: String },
    #[error("no context units to select from")]
    NoUnits,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{skipped} of {requested} examples skipped, above the {budget:.0}% budget")]
    SkipBudget {
        skipped: usize,
        requested: usize,
        budget: f64,
    },
}

/// Which context the teacher sees during rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mode {
    /// Synthetic queries, verified applicable context only.
    #[default]
    #[serde(rename = "sieve")]
    Applicable,
    /// Synthetic queries, every unit in context.
    #[serde(rename = "all-context")]
    AllContext,
    /// Only the example queries, every unit in context.
    #[serde(rename = "seeds-only")]
    SeedsOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Applicable => "sieve",
            Mode::AllContext => "all-context",
            Mode::SeedsOnly => "seeds-only",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sieve" => Ok(Mode::Applicable),
            "all-context" => Ok(Mode::AllContext),
            "seeds-only" => Ok(Mode::SeedsOnly),
            other => Err(SynthError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Verification {
    /// One yes/no request per unit.
    #[default]
    PerUnit,
    /// One request per group of `batch_size` units.
    Batched { batch_size: usize },
}

/// Sampling settings for one stage; the seed is derived per request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSampling {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop: Vec<String>,
}

impl StageSampling {
    pub fn new(temperature: f64, max_tokens: u32) -> Self {
        Self {
            temperature,
            max_tokens,
            stop: Vec::new(),
        }
    }

    fn params(&self, seed: u64) -> SamplingParams {
        SamplingParams {
            stop: self.stop.clone(),
            ..SamplingParams::new(self.temperature, self.max_tokens).with_seed(seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Number of examples; seeds-only mode uses one per example query instead.
    pub n: usize,
    pub n_rollouts: usize,
    pub example_queries: Vec<String>,
    pub verification: Verification,
    pub seed_sampling: StageSampling,
    pub query_sampling: StageSampling,
    pub verify_sampling: StageSampling,
    pub rollout_sampling: StageSampling,
    /// Request this many top alternatives per rollout token when set.
    pub capture_top_logprobs: Option<u32>,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    pub chunking: ChunkingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Applicable,
            n: 64,
            n_rollouts: 1,
            example_queries: Vec::new(),
            verification: Verification::PerUnit,
            seed_sampling: StageSampling::new(1.0, 512),
            query_sampling: StageSampling::new(0.7, 1024),
            verify_sampling: StageSampling::new(0.0, 64),
            rollout_sampling: StageSampling::new(0.7, 2048),
            capture_top_logprobs: None,
            cache_dir: None,
            seed: 0,
            workers: 4,
            chunking: ChunkingConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.n == 0 && self.mode != Mode::SeedsOnly {
            return bad("n must be at least 1");
        }
        if self.n_rollouts == 0 {
            return bad("n_rollouts must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if let Verification::Batched { batch_size: 0 } = self.verification {
            return bad("batch_size must be at least 1");
        }
        if self.mode == Mode::SeedsOnly && self.example_queries.is_empty() {
            return bad("seeds-only mode needs at least one example query");
        }
        if self.capture_top_logprobs == Some(0) {
            return bad("capture_top_logprobs must be at least 1");
        }
        if self.chunking.chunk_tokens == 0 || self.chunking.overlap_tokens >= self.chunking.chunk_tokens {
            return bad("overlap_tokens must be smaller than a non-zero chunk_tokens");
        }
        Ok(())
    }

    /// Example count after the seeds-only override.
    pub fn effective_n(&self) -> usize {
        match self.mode {
            Mode::SeedsOnly => self.example_queries.len(),
            _ => self.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSelection {
    pub unit_ids: Vec<usize>,
    pub raw_reply: String,
    pub unmatched_lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<Vec<TokenLogprobs>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub example_id: usize,
    pub query: String,
    pub seed_unit_ids: Vec<usize>,
    pub applicable_unit_ids: Vec<usize>,
    /// Units placed in the teacher prompt, in corpus order.
    pub rollout_context_ids: Vec<usize>,
    /// The exact teacher prompt the rollouts were sampled from.
    pub teacher_input: String,
    pub rollouts: Vec<Rollout>,
}

fn normalized_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token-set overlap `|a ∩ b| / max(|a|, |b|)` after case folding and
/// punctuation stripping; 0 when either side is empty.
pub fn overlap_score(a: &str, b: &str) -> f64 {
    let (a, b) = (normalized_tokens(a), normalized_tokens(b));
    let denom = a.len().max(b.len());
    if denom == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / denom as f64
}

/// Best-scoring unit for a selected line at or above [`MATCH_THRESHOLD`];
/// ties go to the lower unit id.
pub fn match_line(line: &str, units: &[&ContextUnit]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for u in units {
        let s = overlap_score(line, &u.text);
        if s + 1e-12 < MATCH_THRESHOLD {
            continue;
        }
        best = match best {
            Some((bs, bid)) if bs > s || (bs == s && bid < u.unit_id) => Some((bs, bid)),
            _ => Some((s, u.unit_id)),
        };
    }
    best.map(|(_, id)| id)
}

/// Parses a seed-selection reply against the listed units.
pub fn match_selection(reply: &str, listed: &[&ContextUnit]) -> SeedSelection {
    let mut unit_ids = Vec::new();
    let mut unmatched_lines = Vec::new();
    for line in prompts::parse_selected_lines(reply) {
        match match_line(&line, listed) {
            Some(id) if !unit_ids.contains(&id) => unit_ids.push(id),
            Some(_) => {}
            None => unmatched_lines.push(line),
        }
    }
    SeedSelection {
        unit_ids,
        raw_reply: reply.to_string(),
        unmatched_lines,
    }
}

/// Units offered to the seed selector: all of them for a single-chunk
/// corpus, otherwise the units of one uniformly chosen source chunk.
pub fn seed_candidates(units: &[ContextUnit], seed: u64) -> Vec<&ContextUnit> {
    let chunks: BTreeSet<usize> = units.iter().map(|u| u.source_chunk).collect();
    if chunks.len() <= 1 {
        return units.iter().collect();
    }
    let chunks: Vec<usize> = chunks.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STAGE_CHUNK_PICK]));
    let pick = chunks[rng.gen_range(0..chunks.len())];
    units.iter().filter(|u| u.source_chunk == pick).collect()
}

/// Asks the base model for a seed subset, retrying with fresh seeds when no
/// selected line matches a unit.
pub fn select_seed(
    units: &[ContextUnit],
    backend: &dyn GenerationBackend,
    example_queries: &[String],
    sampling: &StageSampling,
    seed: u64,
) -> Result<SeedSelection, SynthError> {
    if units.is_empty() {
        return Err(SynthError::NoUnits);
    }
    let listed = seed_candidates(units, seed);
    let texts: Vec<&str> = listed.iter().map(|u| u.text.as_str()).collect();
    let prompt = prompts::seed_selection_prompt(&texts, example_queries);
    for attempt in 0..=SEED_RETRIES {
        let request = GenerationRequest {
            prompt: prompt.clone(),
            params: sampling.params(derive_seed(seed, &[STAGE_SEED, attempt as u64])),
        };
        let reply = backend.generate(&request)?;
        let selection = match_selection(&reply.text, &listed);
        if !selection.unmatched_lines.is_empty() {
            log::debug!("seed selection: {} unmatched line(s)", selection.unmatched_lines.len());
        }
        if !selection.unit_ids.is_empty() {
            return Ok(selection);
        }
    }
    Err(SynthError::NoSeedMatch {
        attempts: SEED_RETRIES + 1,
    })
}

/// Writes a query from the seed units, rejecting empty replies and verbatim
/// echoes of an example query.
pub fn generate_query(
    seed_units: &[&str],
    backend: &dyn GenerationBackend,
    example_queries: &[String],
    sampling: &StageSampling,
    seed: u64,
) -> Result<String, SynthError> {
    let prompt = prompts::query_generation_prompt(seed_units, example_queries);
    let mut last = String::new();
    for attempt in 0..=QUERY_RETRIES {
        let request = GenerationRequest {
            prompt: prompt.clone(),
            params: sampling.params(derive_seed(seed, &[STAGE_QUERY, attempt as u64])),
        };
        let reply = backend.generate(&request)?;
        let query = reply.text.trim();
        let echo = example_queries.iter().any(|e| e.trim() == query);
        if !query.is_empty() && !echo {
            return Ok(query.to_string());
        }
        last = query.to_string();
    }
    Err(SynthError::QueryRejected {
        attempts: QUERY_RETRIES + 1,
        last,
    })
}

/// Yes iff the first alphabetic token is "yes", case-insensitively.
pub fn is_yes(reply: &str) -> bool {
    reply
        .split(|c: char| !c.is_alphabetic())
        .find(|w| !w.is_empty())
        .is_some_and(|w| w.eq_ignore_ascii_case("yes"))
}

fn integer() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("valid regex"))
}

/// Ids listed in a batched verification reply, or `None` when the reply is
/// malformed: no ids and no "none", or an id outside the batch.
pub fn parse_batch_reply(reply: &str, batch: &[usize]) -> Option<BTreeSet<usize>> {
    let ids: Vec<&str> = integer().find_iter(reply).map(|m| m.as_str()).collect();
    if ids.is_empty() {
        let says_none = reply
            .split(|c: char| !c.is_alphabetic())
            .any(|w| w.eq_ignore_ascii_case("none"));
        return says_none.then(BTreeSet::new);
    }
    let mut out = BTreeSet::new();
    for id in ids {
        let id: usize = id.parse().ok()?;
        if !batch.contains(&id) {
            return None;
        }
        out.insert(id);
    }
    Some(out)
}

/// Unit ids judged necessary to answer `query`.
pub fn verify(
    query: &str,
    units: &[ContextUnit],
    backend: &dyn GenerationBackend,
    mode: Verification,
    sampling: &StageSampling,
    seed: u64,
) -> Result<BTreeSet<usize>, SynthError> {
    let mut out = BTreeSet::new();
    match mode {
        Verification::PerUnit => {
            for u in units {
                let request = GenerationRequest {
                    prompt: prompts::verification_unit_prompt(query, &u.text),
                    params: sampling.params(derive_seed(seed, &[STAGE_VERIFY, u.unit_id as u64])),
                };
                if is_yes(&backend.generate(&request)?.text) {
                    out.insert(u.unit_id);
                }
            }
        }
        Verification::Batched { batch_size } => {
            for (b, batch) in units.chunks(batch_size.max(1)).enumerate() {
                let listed: Vec<(usize, &str)> = batch.iter().map(|u| (u.unit_id, u.text.as_str())).collect();
                let ids: Vec<usize> = batch.iter().map(|u| u.unit_id).collect();
                let prompt = prompts::verification_batch_prompt(query, &listed);
                let mut parsed = None;
                for attempt in 0..2u64 {
                    let request = GenerationRequest {
                        prompt: prompt.clone(),
                        params: sampling.params(derive_seed(seed, &[STAGE_VERIFY, b as u64, attempt])),
                    };
                    let reply = backend.generate(&request)?;
                    parsed = parse_batch_reply(&reply.text, &ids);
                    if parsed.is_some() {
                        break;
                    }
                }
                match parsed {
                    Some(ids) => out.extend(ids),
                    None => log::warn!("verification batch {b}: malformed reply twice, treating as all-no"),
                }
            }
        }
    }
    Ok(out)
}

/// Units shown to the teacher: the applicable ones in corpus order, or all of
/// them outside sieve mode.
pub fn rollout_context<'a>(
    mode: Mode,
    applicable: &BTreeSet<usize>,
    units: &'a [ContextUnit],
) -> Vec<&'a ContextUnit> {
    match mode {
        Mode::Applicable => units.iter().filter(|u| applicable.contains(&u.unit_id)).collect(),
        Mode::AllContext | Mode::SeedsOnly => units.iter().collect(),
    }
}

/// Samples `n_rollouts` teacher replies to `teacher_input`.
pub fn rollout(
    teacher_input: &str,
    backend: &dyn GenerationBackend,
    n_rollouts: usize,
    sampling: &StageSampling,
    top_logprobs: Option<u32>,
    seed: u64,
) -> Result<Vec<Rollout>, SynthError> {
    (0..n_rollouts)
        .map(|r| {
            let mut params = sampling.params(derive_seed(seed, &[STAGE_ROLLOUT, r as u64]));
            params.top_logprobs = top_logprobs;
            let reply = backend.generate(&GenerationRequest {
                prompt: teacher_input.to_string(),
                params,
            })?;
            Ok(Rollout {
                text: reply.text,
                top_logprobs: top_logprobs.and(reply.logprobs),
            })
        })
        .collect()
}

/// The two models a run talks to.
pub struct Backends {
    pub base: Box<dyn GenerationBackend>,
    pub instruct: Box<dyn GenerationBackend>,
}

impl Backends {
    pub fn new(base: impl GenerationBackend + 'static, instruct: impl GenerationBackend + 'static) -> Self {
        Self {
            base: Box::new(base),
            instruct: Box::new(instruct),
        }
    }

    /// Wraps both backends in the reply cache rooted at `dir`.
    pub fn cached(self, dir: &Path) -> Result<Self, BackendError> {
        Ok(Self {
            base: Box::new(CachedBackend::new(self.base, dir)?),
            instruct: Box::new(CachedBackend::new(self.instruct, dir)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    SeedSelection,
    QueryGeneration,
    Verification,
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub example_id: usize,
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub requested: usize,
    pub written: usize,
    pub skipped: Vec<Skip>,
}

/// Runs all four stages for one synthetic example.
pub fn synthesize_example(
    example_id: usize,
    units: &[ContextUnit],
    backends: &Backends,
    config: &PipelineConfig,
) -> Result<SyntheticExample, Skip> {
    let seed = derive_seed(config.seed, &[example_id as u64]);
    let skip = |stage, e: SynthError| Skip {
        example_id,
        stage,
        reason: e.to_string(),
    };
    let examples = &config.example_queries;

    let (query, seed_unit_ids, applicable) = if config.mode == Mode::SeedsOnly {
        let all = units.iter().map(|u| u.unit_id).collect();
        (examples[example_id].trim().to_string(), Vec::new(), all)
    } else {
        let selection = select_seed(units, &*backends.base, examples, &config.seed_sampling, seed)
            .map_err(|e| skip(Stage::SeedSelection, e))?;
        let seed_texts: Vec<&str> = selection
            .unit_ids
            .iter()
            .filter_map(|id| units.iter().find(|u| u.unit_id == *id))
            .map(|u| u.text.as_str())
            .collect();
        let query = generate_query(&seed_texts, &*backends.instruct, examples, &config.query_sampling, seed)
            .map_err(|e| skip(Stage::QueryGeneration, e))?;
        let applicable = verify(
            &query,
            units,
            &*backends.instruct,
            config.verification,
            &config.verify_sampling,
            seed,
        )
        .map_err(|e| skip(Stage::Verification, e))?;
        (query, selection.unit_ids, applicable)
    };

    let context = rollout_context(config.mode, &applicable, units);
    let texts: Vec<&str> = context.iter().map(|u| u.text.as_str()).collect();
    let teacher_input = prompts::rollout_prompt(&query, &texts);
    let rollouts = rollout(
        &teacher_input,
        &*backends.instruct,
        config.n_rollouts,
        &config.rollout_sampling,
        config.capture_top_logprobs,
        seed,
    )
    .map_err(|e| skip(Stage::Rollout, e))?;

    Ok(SyntheticExample {
        example_id,
        query,
        seed_unit_ids,
        applicable_unit_ids: applicable.into_iter().collect(),
        rollout_context_ids: context.iter().map(|u| u.unit_id).collect(),
        teacher_input,
        rollouts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum DatasetRecord {
    Meta {
        #[serde(flatten)]
        provenance: Provenance,
        mode: Mode,
        n_units: usize,
    },
    Example(SyntheticExample),
}

/// Generates the dataset from already-decomposed units, writing records in
/// example order as each window of `workers` examples completes.
pub fn generate_dataset(
    units: &[ContextUnit],
    backends: &Backends,
    config: &PipelineConfig,
    provenance: &Provenance,
    out: &Path,
) -> Result<PipelineReport, SynthError> {
    config.validate()?;
    if units.is_empty() {
        return Err(SynthError::NoUnits);
    }
    let n = config.effective_n();
    if config.mode == Mode::SeedsOnly && n != config.n {
        log::info!("seeds-only mode: generating {n} examples, one per example query");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .expect("thread pool");
    let mut writer = jsonl::RecordWriter::create(out)?;
    writer.write(&DatasetRecord::Meta {
        provenance: provenance.clone(),
        mode: config.mode,
        n_units: units.len(),
    })?;
    let mut report = PipelineReport {
        requested: n,
        ..Default::default()
    };
    let ids: Vec<usize> = (0..n).collect();
    for window in ids.chunks(config.workers) {
        let results: Vec<Result<SyntheticExample, Skip>> = pool.install(|| {
            window
                .par_iter()
                .map(|&i| synthesize_example(i, units, backends, config))
                .collect()
        });
        for r in results {
            match r {
                Ok(example) => {
                    writer.write(&DatasetRecord::Example(example))?;
                    report.written += 1;
                }
                Err(skip) => {
                    log::warn!("example {} skipped at {:?}: {}", skip.example_id, skip.stage, skip.reason);
                    report.skipped.push(skip);
                }
            }
        }
    }
    if report.skipped.len() as f64 > SKIP_BUDGET * n as f64 {
        return Err(SynthError::SkipBudget {
            skipped: report.skipped.len(),
            requested: n,
            budget: SKIP_BUDGET * 100.0,
        });
    }
    Ok(report)
}

/// Chunks and decomposes the corpus with the instruct backend, then
/// generates the dataset. Returns the units alongside the report.
pub fn run_pipeline(
    corpus: &ContextCorpus,
    backends: &Backends,
    config: &PipelineConfig,
    provenance: &Provenance,
    out: &Path,
) -> Result<(Vec<ContextUnit>, PipelineReport), SynthError> {
    config.validate()?;
    let chunks = context::chunk_corpus(corpus, config.chunking)?;
    let units = context::decompose_all(
        &chunks,
        &*backends.instruct,
        &context::decomposition_params(config.seed),
        config.workers,
    )?;
    if units.is_empty() {
        return Err(ContextError::NoUnits.into());
    }
    let report = generate_dataset(&units, backends, config, provenance, out)?;
    Ok((units, report))
}

pub fn read_dataset(path: &Path) -> Result<(Option<Provenance>, Vec<SyntheticExample>), SynthError> {
    let mut meta = None;
    let mut examples = Vec::new();
    for r in jsonl::read_records::<DatasetRecord>(path)? {
        match r {
            DatasetRecord::Meta { provenance, .. } => meta = Some(provenance),
            DatasetRecord::Example(e) => examples.push(e),
        }
    }
    Ok((meta, examples))
}

/// Confusion counts of predicted against true applicable sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationTally {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl VerificationTally {
    pub fn add(&mut self, predicted: &BTreeSet<usize>, truth: &BTreeSet<usize>) {
        self.true_positive += predicted.intersection(truth).count();
        self.false_positive += predicted.difference(truth).count();
        self.false_negative += truth.difference(predicted).count();
    }

    /// 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        let d = self.true_positive + self.false_positive;
        if d == 0 { 1.0 } else { self.true_positive as f64 / d as f64 }
    }

    /// 1 when nothing was applicable.
    pub fn recall(&self) -> f64 {
        let d = self.true_positive + self.false_negative;
        if d == 0 { 1.0 } else { self.true_positive as f64 / d as f64 }
    }
}
