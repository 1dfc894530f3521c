//! A character-level rule-lookup task small enough to train on a laptop.
//!
//! A query names one customer type and one or two categories, e.g. `sb?`.
//! The context is a table of rules `key=NN`, one per customer type and
//! category. The answer is the largest percent among the rules whose key
//! appears in the query, written as two digits and a period: `30.`.
//!
//! [`MicroTeacher`] answers from the rules in its prompt but only reads the
//! first `attention_span` of them, so listing unrelated rules ahead of the
//! relevant ones makes it wrong. [`MicroBackend`] serves every pipeline
//! stage for this corpus.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::scripted::{line_decomposition, random_seed_reply, request_rng, RequestCounter};
use crate::backend::{
    BackendError, Generation, GenerationBackend, GenerationRequest, Role, TokenLogprobs, TopLogprob,
};
use crate::distill::objective::log_softmax;
use crate::context::ContextCorpus;
use crate::distill::{
    argmax, build_examples, mean_kl, train, truncate_topk, Architecture, DistillExample, StudentModel, TargetSource,
    TeacherModel, TokenVocab, TopKTarget, TrainConfig, TrainOutcome,
};
use crate::jsonl::Provenance;
use crate::synth::{self, Backends, Mode, PipelineConfig};
use crate::tokenize::WhitespacePunct;
use crate::prompts::{self, PromptKind};

pub const CUSTOMERS: &str = "snvetr";
pub const CATEGORIES: &str = "cbfhpylk";
pub const EOS: char = '.';
const ALPHABET: &str = "snvetrcbfhpylk0123456789?.=-: \nContext";

/// Percent for every key, customers first.
const TABLE: &[(char, u32)] = &[
    ('s', 15),
    ('n', 5),
    ('v', 20),
    ('e', 25),
    ('t', 10),
    ('r', 0),
    ('c', 30),
    ('b', 12),
    ('f', 8),
    ('h', 18),
    ('p', 22),
    ('y', 35),
    ('l', 14),
    ('k', 27),
];

/// The fixed vocabulary covering queries, prompts and answers.
pub fn vocab() -> TokenVocab {
    TokenVocab::from_texts([ALPHABET])
}

pub fn rule_text(key: char, percent: u32) -> String {
    format!("{key}={percent:02}")
}

/// The rule table as a context corpus, one rule per line.
pub fn corpus_text() -> String {
    let mut s = String::from("Rules:\n");
    for &(k, p) in TABLE {
        s.push_str(&rule_text(k, p));
        s.push('\n');
    }
    s
}

fn parse_rule(text: &str) -> Option<(char, u32)> {
    let (k, p) = text.trim().split_once('=')?;
    let mut chars = k.chars();
    let key = chars.next()?;
    if chars.next().is_some() || p.len() != 2 {
        return None;
    }
    Some((key, p.parse().ok()?))
}

fn query_keys(query: &str) -> BTreeSet<char> {
    query.trim().trim_end_matches('?').chars().collect()
}

/// Largest percent among `rules` whose key appears in `query`, formatted
/// as the response text.
pub fn answer_with(query: &str, rules: &[(char, u32)]) -> String {
    let keys = query_keys(query);
    let best = rules
        .iter()
        .filter(|(k, _)| keys.contains(k))
        .map(|r| r.1)
        .max()
        .unwrap_or(0);
    format!("{best:02}{EOS}")
}

/// The correct answer under the full rule table.
pub fn answer(query: &str) -> String {
    answer_with(query, TABLE)
}

/// Rule unit texts whose key appears in the query.
pub fn applicable_rules(query: &str) -> Vec<String> {
    let keys = query_keys(query);
    TABLE
        .iter()
        .filter(|(k, _)| keys.contains(k))
        .map(|&(k, p)| rule_text(k, p))
        .collect()
}

pub fn make_query(customer: char, categories: &[char]) -> String {
    let mut cats: Vec<char> = categories.to_vec();
    cats.sort_by_key(|c| CATEGORIES.find(*c));
    cats.dedup();
    let mut q = String::new();
    q.push(customer);
    q.extend(cats);
    q.push('?');
    q
}

/// Every well-formed query: one customer with one or two categories.
pub fn all_queries() -> Vec<String> {
    let cats: Vec<char> = CATEGORIES.chars().collect();
    let mut out = Vec::new();
    for c in CUSTOMERS.chars() {
        for (i, &a) in cats.iter().enumerate() {
            out.push(make_query(c, &[a]));
            for &b in &cats[i + 1..] {
                out.push(make_query(c, &[a, b]));
            }
        }
    }
    out
}

/// Three fixed example queries for the pipeline's prompts.
pub fn example_queries() -> Vec<String> {
    vec!["sc?".into(), "vbh?".into(), "rpk?".into()]
}

/// Tabular teacher over the fixed vocabulary.
#[derive(Debug, Clone)]
pub struct MicroTeacher {
    pub vocab: TokenVocab,
    /// Number of context rules read, in prompt order.
    pub attention_span: usize,
    /// Logit of the answer token; every other token has logit 0.
    pub confidence: f64,
}

impl Default for MicroTeacher {
    fn default() -> Self {
        Self {
            vocab: vocab(),
            attention_span: 6,
            confidence: 6.0,
        }
    }
}

impl MicroTeacher {
    /// The answer the teacher gives for a rollout prompt.
    pub fn intended(&self, prompt: &str) -> String {
        let (query, context) = prompts::parse_rollout(prompt);
        let visible: Vec<(char, u32)> = context
            .iter()
            .take(self.attention_span)
            .filter_map(|t| parse_rule(t))
            .collect();
        answer_with(&query, &visible)
    }

    fn position_logits(&self, intended: &[usize], position: usize) -> Vec<f64> {
        let eos = self.vocab.id(".").expect("period in vocabulary");
        let want = intended.get(position).copied().unwrap_or(eos);
        let mut logits = vec![0.0; self.vocab.len()];
        logits[want] = self.confidence;
        logits
    }

    fn intended_ids(&self, prompt: &str) -> Vec<usize> {
        self.vocab
            .encode(&self.intended(prompt))
            .expect("answers use vocabulary characters")
    }
}

impl TeacherModel for MicroTeacher {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn response_logits(&self, teacher_input: &[usize], response: &[usize]) -> Vec<Vec<f64>> {
        let intended = self.intended_ids(&self.vocab.decode(teacher_input));
        (0..response.len()).map(|p| self.position_logits(&intended, p)).collect()
    }
}

/// Scripted backend for the micro corpus.
///
/// Seed selection samples 3–5 rules, query generation builds a query from
/// the selected keys, verification checks whether a rule's key occurs in the
/// query, and rollouts sample from [`MicroTeacher`].
pub struct MicroBackend {
    role: Role,
    teacher: MicroTeacher,
    counter: RequestCounter,
}

impl MicroBackend {
    pub fn new(role: Role) -> Self {
        Self {
            role,
            teacher: MicroTeacher::default(),
            counter: RequestCounter::default(),
        }
    }

    pub fn counter(&self) -> RequestCounter {
        self.counter.clone()
    }

    fn query_for(selected: &[String], rng: &mut rand_chacha::ChaCha8Rng) -> String {
        let keys: Vec<char> = selected.iter().filter_map(|t| parse_rule(t)).map(|r| r.0).collect();
        let customer = keys
            .iter()
            .copied()
            .find(|k| CUSTOMERS.contains(*k))
            .unwrap_or_else(|| *CUSTOMERS.chars().collect::<Vec<_>>().choose(rng).expect("non-empty"));
        let mut cats: Vec<char> = keys.iter().copied().filter(|k| CATEGORIES.contains(*k)).collect();
        cats.shuffle(rng);
        cats.truncate(2);
        if cats.len() < 2 && rng.gen_bool(0.5) || cats.is_empty() {
            cats.push(*CATEGORIES.chars().collect::<Vec<_>>().choose(rng).expect("non-empty"));
        }
        make_query(customer, &cats)
    }

    fn rollout(&self, request: &GenerationRequest, rng: &mut rand_chacha::ChaCha8Rng) -> Generation {
        let intended = self.teacher.intended_ids(&request.prompt);
        let eos = self.teacher.vocab.id(".").expect("period in vocabulary");
        let temperature = request.params.temperature;
        let mut text = String::new();
        let mut captured = Vec::new();
        for position in 0..intended.len() {
            let logits = self.teacher.position_logits(&intended, position);
            let next = if temperature <= 0.0 {
                argmax(&logits)
            } else {
                let scaled: Vec<f64> = log_softmax(&logits.iter().map(|z| z / temperature).collect::<Vec<_>>());
                let mut u: f64 = rng.gen();
                let mut pick = scaled.len() - 1;
                for (i, lp) in scaled.iter().enumerate() {
                    u -= lp.exp();
                    if u <= 0.0 {
                        pick = i;
                        break;
                    }
                }
                pick
            };
            let token = self.teacher.vocab.token(next).expect("id in range").to_string();
            if let Some(k) = request.params.top_logprobs {
                let lp = log_softmax(&logits);
                let top = truncate_topk(&lp, k as usize)
                    .expect("finite logits")
                    .into_iter()
                    .map(|(id, logprob)| TopLogprob {
                        token: self.teacher.vocab.token(id).expect("id in range").to_string(),
                        logprob,
                    })
                    .collect();
                captured.push(TokenLogprobs {
                    token: token.clone(),
                    logprob: lp[next],
                    top,
                });
            }
            text.push_str(&token);
            if next == eos {
                break;
            }
        }
        Generation {
            text,
            logprobs: request.params.top_logprobs.map(|_| captured),
        }
    }
}

impl GenerationBackend for MicroBackend {
    fn role(&self) -> Role {
        self.role
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        self.counter.bump();
        let prompt = &request.prompt;
        let mut rng = request_rng(request);
        let applies = |q: &str, u: &str| parse_rule(u).is_some_and(|(k, _)| query_keys(q).contains(&k));
        let text = match PromptKind::detect(prompt) {
            PromptKind::Decomposition => line_decomposition(prompts::parse_decomposition(prompt).unwrap_or("")),
            PromptKind::SeedSelection => random_seed_reply(&prompts::parse_seed_selection(prompt), &mut rng),
            PromptKind::QueryGeneration => Self::query_for(&prompts::parse_query_generation(prompt), &mut rng),
            PromptKind::VerifyUnit => match prompts::parse_verify_unit(prompt) {
                Some((q, u)) if applies(&q, &u) => "Yes".into(),
                _ => "No".into(),
            },
            PromptKind::VerifyBatch => match prompts::parse_verify_batch(prompt) {
                Some((q, units)) => {
                    let ids: Vec<String> = units
                        .iter()
                        .filter(|(_, u)| applies(&q, u))
                        .map(|(id, _)| id.to_string())
                        .collect();
                    if ids.is_empty() { "none".into() } else { ids.join(", ") }
                }
                None => "none".into(),
            },
            PromptKind::Rollout => return Ok(self.rollout(request, &mut rng)),
        };
        Ok(Generation::text(text))
    }

    fn name(&self) -> String {
        format!("micro-scripted-{}", self.role.as_str())
    }
}

/// Distillation examples for `queries` with the teacher shown exactly the
/// applicable rules and the response set to the teacher's greedy answer.
pub fn reference_examples(teacher: &MicroTeacher, queries: &[String], k: usize) -> Vec<DistillExample> {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let prompt = prompts::rollout_prompt(q, &applicable_rules(q));
            let teacher_input = teacher.vocab.encode(&prompt).expect("vocabulary covers prompts");
            let response = teacher.intended_ids(&prompt);
            let targets = teacher
                .response_logits(&teacher_input, &response)
                .iter()
                .enumerate()
                .map(|(position, z)| TopKTarget {
                    position,
                    entries: truncate_topk(&log_softmax(z), k).expect("finite logits"),
                })
                .collect();
            DistillExample {
                example_id: i,
                rollout_index: 0,
                student_input: teacher.vocab.encode(q).expect("vocabulary covers queries"),
                teacher_input,
                response,
                targets,
            }
        })
        .collect()
}

/// Fraction of response positions where the student's argmax, fed the
/// reference prefix, equals the teacher's argmax.
pub fn argmax_agreement(model: &StudentModel, examples: &[DistillExample]) -> f64 {
    let mut agree = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let logits = model.response_logits(&ex.student_input, &ex.response);
        for (z, t) in logits.iter().zip(&ex.targets) {
            total += 1;
            agree += usize::from(argmax(z) == t.entries[0].0);
        }
    }
    if total == 0 { 0.0 } else { agree as f64 / total as f64 }
}

/// Fraction of queries whose greedy student answer equals the true answer.
pub fn accuracy(model: &StudentModel, vocab: &TokenVocab, queries: &[String]) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let eos = vocab.id(".");
    let correct = queries
        .iter()
        .filter(|q| {
            let input = vocab.encode(q).expect("vocabulary covers queries");
            vocab.decode(&model.greedy(&input, 3, eos)) == answer(q)
        })
        .count();
    correct as f64 / queries.len() as f64
}

/// Summary of one train-and-evaluate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegReport {
    pub train_examples: usize,
    pub heldout_queries: usize,
    pub accuracy: f64,
    pub agreement: f64,
    pub kl_init: f64,
    pub kl_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegConfig {
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub arch_seed: u64,
}

impl LegConfig {
    /// Desk-scale defaults: the published optimizer settings with the rate,
    /// batch and warmup scaled to a few thousand parameters.
    pub fn new(mode: Mode) -> Self {
        Self {
            pipeline: PipelineConfig {
                mode,
                n: 160,
                n_rollouts: 2,
                example_queries: example_queries(),
                seed: 7,
                workers: 4,
                ..Default::default()
            },
            train: TrainConfig {
                learning_rate: 3e-3,
                effective_batch: 8,
                warmup_steps: 20,
                epochs: 30,
                top_k: 100,
                ..Default::default()
            },
            arch_seed: 11,
        }
    }
}

/// Generates a dataset under `config.pipeline`, distills it into a fresh
/// student and evaluates on every query the student never trained on.
pub fn run_leg(config: &LegConfig, dir: &Path) -> Result<(LegReport, TrainOutcome), Box<dyn std::error::Error>> {
    let corpus = ContextCorpus::new("micro", corpus_text(), &WhitespacePunct)?;
    let backends = Backends::new(MicroBackend::new(Role::BaseCompletion), MicroBackend::new(Role::Instruct));
    let out = dir.join(format!("micro-{}.jsonl", config.pipeline.mode.as_str()));
    let provenance = Provenance::new("dataset", crate::jsonl::config_hash(config));
    synth::run_pipeline(&corpus, &backends, &config.pipeline, &provenance, &out)?;
    let (_, dataset) = synth::read_dataset(&out)?;

    let teacher = MicroTeacher::default();
    let vocab = teacher.vocab.clone();
    let built = build_examples(
        &dataset,
        TargetSource::Model(&teacher),
        &vocab,
        config.train.top_k,
        config.train.max_seq_len,
    )?;
    let seen: BTreeSet<&str> = dataset.iter().map(|e| e.query.as_str()).collect();
    let heldout: Vec<String> = all_queries().into_iter().filter(|q| !seen.contains(q.as_str())).collect();
    let reference = reference_examples(&teacher, &heldout, config.train.top_k);

    let init = StudentModel::init(Architecture::new(vocab.len()), config.arch_seed)?;
    let kl_init = mean_kl(&init, &reference, config.train.temperature)?;
    let outcome = train(&built.examples, &config.train, init)?;
    let report = LegReport {
        train_examples: built.examples.len(),
        heldout_queries: heldout.len(),
        accuracy: accuracy(&outcome.model, &vocab, &heldout),
        agreement: argmax_agreement(&outcome.model, &reference),
        kl_init,
        kl_final: mean_kl(&outcome.model, &reference, config.train.temperature)?,
    };
    Ok((report, outcome))
}
