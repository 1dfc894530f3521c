//! Deterministic scripted backends for tests and offline runs.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackendError, Generation, GenerationBackend, GenerationRequest, Role};
use crate::prompts::{self, PromptKind};

/// Shared request counter; clones observe the same count.
#[derive(Debug, Clone, Default)]
pub struct RequestCounter(Arc<AtomicUsize>);

impl RequestCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
    }

    pub fn get(&self) -> usize {
        self.0.load(Ordering::SeqCst)
    }
}

type ReplyFn = dyn Fn(&GenerationRequest) -> Result<Generation, BackendError> + Send + Sync;

/// A backend whose replies come from a closure over the request.
pub struct ScriptedBackend {
    role: Role,
    reply: Box<ReplyFn>,
    counter: RequestCounter,
}

impl ScriptedBackend {
    pub fn new<F>(role: Role, reply: F) -> Self
    where
        F: Fn(&GenerationRequest) -> Result<Generation, BackendError> + Send + Sync + 'static,
    {
        Self {
            role,
            reply: Box::new(reply),
            counter: RequestCounter::default(),
        }
    }

    /// Convenience constructor for closures that only produce text.
    pub fn from_text<F>(role: Role, reply: F) -> Self
    where
        F: Fn(&GenerationRequest) -> String + Send + Sync + 'static,
    {
        Self::new(role, move |req| Ok(Generation::text(reply(req))))
    }

    /// Always returns the same reply.
    pub fn fixed(role: Role, text: impl Into<String>) -> Self {
        let text = text.into();
        Self::from_text(role, move |_| text.clone())
    }

    pub fn counter(&self) -> RequestCounter {
        self.counter.clone()
    }
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("role", &self.role)
            .field("requests", &self.counter.get())
            .finish()
    }
}

impl GenerationBackend for ScriptedBackend {
    fn role(&self) -> Role {
        self.role
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        self.counter.bump();
        (self.reply)(request)
    }

    fn name(&self) -> String {
        format!("scripted-{}", self.role.as_str())
    }
}

const STOPWORDS: &[&str] = &[
    "about", "after", "apply", "applies", "been", "before", "being", "cart", "does", "each",
    "from", "have", "into", "items", "item", "more", "only", "other", "over", "should", "such",
    "that", "their", "them", "then", "there", "these", "they", "this", "what", "when", "where",
    "which", "while", "will", "with", "would", "your",
];

/// Lowercased alphanumeric words of length ≥ 4, minus a small stopword list.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 4)
        .map(str::to_lowercase)
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Keyword-overlap applicability predicate used by [`HeuristicBackend`].
pub fn shares_keyword(query: &str, unit: &str) -> bool {
    let q = content_words(query);
    content_words(unit).iter().any(|w| q.contains(w))
}

/// Splits content into line items, dropping bullets, blank lines and
/// header lines that end in a colon, and joins them with the `###` delimiter.
pub fn line_decomposition(content: &str) -> String {
    content
        .lines()
        .map(|l| l.trim().trim_start_matches(['-', '*', '•']).trim())
        .filter(|l| !l.is_empty() && !l.ends_with(':'))
        .collect::<Vec<_>>()
        .join("\n###\n")
}

/// Picks 3–5 listed units (all of them when fewer than 3) and formats them as
/// the continuation of the dangling "-" bullet.
pub fn random_seed_reply(units: &[String], rng: &mut ChaCha8Rng) -> String {
    if units.is_empty() {
        return String::new();
    }
    let k = if units.len() <= 3 {
        units.len()
    } else {
        rng.gen_range(3..=units.len().min(5))
    };
    let mut picked: Vec<&String> = units.choose_multiple(rng, k).collect();
    picked.sort_by_key(|u| units.iter().position(|x| x == *u));
    let lines: Vec<String> = picked.iter().map(|u| u.replace('\n', " ")).collect();
    format!(" {}", lines.join("\n- "))
}

pub(crate) fn request_rng(request: &GenerationRequest) -> ChaCha8Rng {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(request.prompt.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    let prompt_hash = u64::from_le_bytes(bytes);
    ChaCha8Rng::seed_from_u64(super::derive_seed(request.params.seed, &[prompt_hash]))
}

/// Domain-agnostic scripted backend that answers every pipeline prompt.
///
/// Decomposition splits lines, seed selection samples 3–5 units, query
/// generation writes a keyword question, verification answers yes iff the
/// unit shares a content word with the query, and rollouts summarize the
/// context they were given. All choices derive from the request seed.
#[derive(Debug, Default)]
pub struct HeuristicBackend {
    role: Option<Role>,
    counter: RequestCounter,
}

impl HeuristicBackend {
    pub fn new(role: Role) -> Self {
        Self {
            role: Some(role),
            counter: RequestCounter::default(),
        }
    }

    pub fn counter(&self) -> RequestCounter {
        self.counter.clone()
    }

    fn reply(request: &GenerationRequest) -> String {
        let prompt = &request.prompt;
        let mut rng = request_rng(request);
        match PromptKind::detect(prompt) {
            PromptKind::Decomposition => {
                line_decomposition(prompts::parse_decomposition(prompt).unwrap_or(""))
            }
            PromptKind::SeedSelection => {
                random_seed_reply(&prompts::parse_seed_selection(prompt), &mut rng)
            }
            PromptKind::QueryGeneration => {
                let selected = prompts::parse_query_generation(prompt);
                let mut words: Vec<String> = selected
                    .iter()
                    .flat_map(|u| content_words(u).into_iter().take(2))
                    .collect();
                words.dedup();
                let case: u32 = rng.gen_range(1..10_000);
                format!(
                    "In case #{case}, how do the rules on {} apply?",
                    if words.is_empty() { "this".to_string() } else { words.join(", ") }
                )
            }
            PromptKind::VerifyUnit => match prompts::parse_verify_unit(prompt) {
                Some((q, u)) if shares_keyword(&q, &u) => "Yes".into(),
                _ => "No".into(),
            },
            PromptKind::VerifyBatch => match prompts::parse_verify_batch(prompt) {
                Some((q, units)) => {
                    let ids: Vec<String> = units
                        .iter()
                        .filter(|(_, u)| shares_keyword(&q, u))
                        .map(|(id, _)| id.to_string())
                        .collect();
                    if ids.is_empty() { "none".into() } else { ids.join(", ") }
                }
                None => "none".into(),
            },
            PromptKind::Rollout => {
                let (query, context) = prompts::parse_rollout(prompt);
                let first = query.lines().next().unwrap_or("");
                format!(
                    "Answer to \"{first}\" using {} guideline(s). Variant {}.",
                    context.len(),
                    rng.gen_range(0..1000)
                )
            }
        }
    }
}

impl GenerationBackend for HeuristicBackend {
    fn role(&self) -> Role {
        self.role.unwrap_or(Role::Instruct)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        self.counter.bump();
        Ok(Generation::text(Self::reply(request)))
    }

    fn name(&self) -> String {
        format!("heuristic-{}", self.role().as_str())
    }
}
