//! Turning synthetic examples into distillation examples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::StudentModel;
use super::objective::{log_softmax, soft_targets, truncate_topk, TopKTarget};
use super::vocab::TokenVocab;
use super::DistillError;
use crate::synth::{Rollout, SyntheticExample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillExample {
    pub example_id: usize,
    pub rollout_index: usize,
    /// The query alone.
    pub student_input: Vec<usize>,
    /// The query followed by its context block.
    pub teacher_input: Vec<usize>,
    pub response: Vec<usize>,
    /// One per response position, indexed from the response start.
    pub targets: Vec<TopKTarget>,
}

impl DistillExample {
    pub fn soft_targets(&self, tau: f64) -> Result<Vec<Vec<(usize, f64)>>, DistillError> {
        self.targets.iter().map(|t| soft_targets(&t.entries, tau)).collect()
    }
}

/// Anything that scores the next token given a teacher prompt and a
/// response prefix.
pub trait TeacherModel: Sync {
    fn vocab_size(&self) -> usize;

    /// `V` logits for each response position, conditioned on the prompt and
    /// the response tokens before it.
    fn response_logits(&self, teacher_input: &[usize], response: &[usize]) -> Vec<Vec<f64>>;
}

impl TeacherModel for StudentModel {
    fn vocab_size(&self) -> usize {
        self.arch.vocab_size
    }

    fn response_logits(&self, teacher_input: &[usize], response: &[usize]) -> Vec<Vec<f64>> {
        StudentModel::response_logits(self, teacher_input, response)
    }
}

/// Where teacher scores come from.
#[derive(Clone, Copy)]
pub enum TargetSource<'a> {
    /// Run a teacher model over the prompt and response.
    Model(&'a dyn TeacherModel),
    /// Use the per-token alternatives captured with each rollout.
    Captured,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildOutcome {
    pub examples: Vec<DistillExample>,
    /// One diagnostic per skipped rollout.
    pub skipped: Vec<String>,
}

fn encode(vocab: &TokenVocab, text: &str, what: &str) -> Result<Vec<usize>, String> {
    vocab
        .encode(text)
        .map_err(|c| format!("{what} has out-of-vocabulary character {c:?}"))
}

/// Top-K targets over the full log-softmax of each position's logits.
fn model_targets(
    teacher: &dyn TeacherModel,
    teacher_input: &[usize],
    response: &[usize],
    k: usize,
) -> Result<Vec<TopKTarget>, String> {
    teacher
        .response_logits(teacher_input, response)
        .iter()
        .enumerate()
        .map(|(position, logits)| {
            let entries = truncate_topk(&log_softmax(logits), k).map_err(|e| e.to_string())?;
            Ok(TopKTarget { position, entries })
        })
        .collect()
}

/// Response ids and top-K targets from captured per-token alternatives.
fn captured_targets(
    rollout: &Rollout,
    vocab: &TokenVocab,
    k: usize,
) -> Result<(Vec<usize>, Vec<TopKTarget>), String> {
    let tokens = rollout
        .top_logprobs
        .as_ref()
        .ok_or("rollout has no captured logprobs")?;
    let mut response = Vec::with_capacity(tokens.len());
    let mut targets = Vec::with_capacity(tokens.len());
    for (position, t) in tokens.iter().enumerate() {
        response.push(
            vocab
                .id(&t.token)
                .ok_or_else(|| format!("captured token {:?} not in vocabulary", t.token))?,
        );
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(t.top.len());
        for alt in &t.top {
            let id = vocab
                .id(&alt.token)
                .ok_or_else(|| format!("captured alternative {:?} not in vocabulary", alt.token))?;
            if !alt.logprob.is_finite() {
                return Err(format!("non-finite logprob at position {position}"));
            }
            if !entries.iter().any(|e| e.0 == id) {
                entries.push((id, alt.logprob));
            }
        }
        if entries.is_empty() {
            return Err(format!("no alternatives captured at position {position}"));
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        entries.truncate(k);
        targets.push(TopKTarget { position, entries });
    }
    if vocab.decode(&response) != rollout.text {
        return Err("captured tokens do not spell the rollout text".into());
    }
    Ok((response, targets))
}

/// One distillation example per rollout. Rollouts that do not tokenize,
/// exceed `max_seq_len` or lack captured scores are skipped.
pub fn build_examples(
    dataset: &[SyntheticExample],
    source: TargetSource<'_>,
    vocab: &TokenVocab,
    k: usize,
    max_seq_len: usize,
) -> Result<BuildOutcome, DistillError> {
    if k == 0 {
        return Err(DistillError::Config("K must be at least 1".into()));
    }
    if let TargetSource::Model(t) = source {
        if t.vocab_size() != vocab.len() {
            return Err(DistillError::Config(format!(
                "teacher emits {} logits for a vocabulary of {}",
                t.vocab_size(),
                vocab.len()
            )));
        }
    }
    let jobs: Vec<(&SyntheticExample, usize, &Rollout)> = dataset
        .iter()
        .flat_map(|ex| ex.rollouts.iter().enumerate().map(move |(r, ro)| (ex, r, ro)))
        .collect();
    let results: Vec<Result<DistillExample, String>> = jobs
        .par_iter()
        .map(|&(ex, r, rollout)| {
            let tag = |m: String| format!("example {} rollout {r}: {m}", ex.example_id);
            let student_input = encode(vocab, &ex.query, "query").map_err(tag)?;
            let teacher_input = encode(vocab, &ex.teacher_input, "teacher input").map_err(tag)?;
            let (response, targets) = match source {
                TargetSource::Model(teacher) => {
                    let response = encode(vocab, &rollout.text, "rollout").map_err(tag)?;
                    let targets = model_targets(teacher, &teacher_input, &response, k).map_err(tag)?;
                    (response, targets)
                }
                TargetSource::Captured => captured_targets(rollout, vocab, k).map_err(tag)?,
            };
            if response.is_empty() {
                return Err(tag("empty rollout".into()));
            }
            let longest = teacher_input.len().max(student_input.len()) + response.len();
            if longest > max_seq_len {
                return Err(tag(format!("{longest} tokens exceeds max_seq_len {max_seq_len}")));
            }
            Ok(DistillExample {
                example_id: ex.example_id,
                rollout_index: r,
                student_input,
                teacher_input,
                response,
                targets,
            })
        })
        .collect();
    let mut out = BuildOutcome::default();
    for r in results {
        match r {
            Ok(e) => out.examples.push(e),
            Err(msg) => {
                log::warn!("{msg}");
                out.skipped.push(msg);
            }
        }
    }
    Ok(out)
}
