use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ctxd_core::backend::{derive_seed, GenerationRequest, SamplingParams};
use ctxd_core::context::{self, ContextCorpus};
use ctxd_core::distill::{
    build_examples, train as train_student, Architecture, Checkpoint, StudentModel, TargetSource, TokenVocab,
};
use ctxd_core::eval::{evaluate, write_report, Task, Truths};
use ctxd_core::jsonl::{self, Provenance};
use ctxd_core::micro::MicroTeacher;
use ctxd_core::prompts;
use ctxd_core::retail;
use ctxd_core::synth::{self, PipelineReport};
use ctxd_core::tokenize::{Tokenizer, WhitespacePunct};
use serde::{Deserialize, Serialize};

use crate::backends;
use crate::config::{RunConfig, TargetChoice, TokenizerChoice};

/// Provenance over the settings that shape results. Paths and the cache
/// location are left out so moving files around keeps outputs identical.
fn provenance(cfg: &RunConfig, kind: &str) -> Provenance {
    let mut shaped = cfg.clone();
    shaped.paths = Default::default();
    shaped.pipeline.cache_dir = None;
    Provenance::new(kind, shaped.hash())
}

fn tokenizer(cfg: &RunConfig) -> &'static dyn Tokenizer {
    match cfg.tokenizer {
        TokenizerChoice::WhitespacePunct => &WhitespacePunct,
    }
}

fn load_corpus(cfg: &RunConfig, path: &Path) -> Result<ContextCorpus> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading corpus {}", path.display()))?;
    let id = path.file_stem().map_or("corpus".into(), |s| s.to_string_lossy().into_owned());
    ContextCorpus::new(id, text, tokenizer(cfg)).with_context(|| format!("corpus {}", path.display()))
}

pub fn retail(cfg: &RunConfig, out: &Path) -> Result<()> {
    let r = &cfg.retail;
    let records = retail::build_eval_set(r.first_seed..r.first_seed + r.count, &r.generator)?;
    retail::write_eval_set(out, &provenance(cfg, "eval-set"), &records)
        .with_context(|| format!("writing {}", out.display()))?;
    log::info!("wrote {} queries to {}", records.len(), out.display());
    Ok(())
}

pub fn decompose(cfg: &RunConfig, corpus: &Path, out: &Path) -> Result<()> {
    let corpus = load_corpus(cfg, corpus)?;
    let chunks = context::chunk_corpus(&corpus, cfg.pipeline.chunking)?;
    let backends = backends::build(cfg)?;
    let units = context::decompose_all(
        &chunks,
        &*backends.instruct,
        &context::decomposition_params(cfg.pipeline.seed),
        cfg.pipeline.workers,
    )?;
    ensure!(!units.is_empty(), "decomposition produced no units");
    context::write_units(out, &provenance(cfg, "units"), &units)?;
    log::info!("{} chunks, {} units written to {}", chunks.len(), units.len(), out.display());
    Ok(())
}

pub fn generate(cfg: &RunConfig, corpus: Option<&Path>, units: Option<&Path>, out: &Path) -> Result<()> {
    let backends = backends::build(cfg)?;
    let prov = provenance(cfg, "dataset");
    let report: PipelineReport = match (units, corpus) {
        (Some(units), _) => {
            let units = context::read_units(units).with_context(|| format!("reading units {}", units.display()))?;
            log::info!("using {} existing units", units.len());
            synth::generate_dataset(&units, &backends, &cfg.pipeline, &prov, out)?
        }
        (None, Some(corpus)) => synth::run_pipeline(&load_corpus(cfg, corpus)?, &backends, &cfg.pipeline, &prov, out)?.1,
        (None, None) => bail!("no input: pass --units or --corpus, or set paths.units or paths.corpus"),
    };
    log::info!(
        "{} of {} examples written to {} ({} skipped)",
        report.written,
        report.requested,
        out.display(),
        report.skipped.len()
    );
    Ok(())
}

fn dataset_vocab(dataset: &[synth::SyntheticExample]) -> TokenVocab {
    let mut texts: Vec<&str> = Vec::new();
    for ex in dataset {
        texts.push(&ex.query);
        texts.push(&ex.teacher_input);
        for r in &ex.rollouts {
            texts.push(&r.text);
            for t in r.top_logprobs.iter().flatten() {
                texts.extend(t.top.iter().map(|a| a.token.as_str()).filter(|s| s.chars().count() == 1));
            }
        }
    }
    TokenVocab::from_texts(texts)
}

pub fn train(cfg: &RunConfig, dataset: &Path, out: &Path, init: Option<&Path>) -> Result<()> {
    let (_, dataset) = synth::read_dataset(dataset).with_context(|| format!("reading dataset {}", dataset.display()))?;
    ensure!(!dataset.is_empty(), "dataset has no examples");
    let teacher = MicroTeacher::default();
    let resumed = init
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display())))
        .transpose()?;
    let vocab = match (&resumed, cfg.student.targets) {
        (Some(c), _) => c.vocab.clone(),
        (None, TargetChoice::MicroTeacher) => teacher.vocab.clone(),
        (None, TargetChoice::Captured) => dataset_vocab(&dataset),
    };
    let source = match cfg.student.targets {
        TargetChoice::Captured => TargetSource::Captured,
        TargetChoice::MicroTeacher => {
            ensure!(vocab == teacher.vocab, "the micro teacher needs a student over its own vocabulary");
            TargetSource::Model(&teacher)
        }
    };
    let built = build_examples(&dataset, source, &vocab, cfg.train.top_k, cfg.train.max_seq_len)?;
    ensure!(
        !built.examples.is_empty(),
        "no usable rollouts ({} skipped); see the warnings above",
        built.skipped.len()
    );
    let model = match &resumed {
        Some(c) => c.model()?,
        None => {
            let s = &cfg.student;
            let arch = Architecture { vocab_size: vocab.len(), window: s.window, embed_dim: s.embed_dim, hidden: s.hidden };
            StudentModel::init(arch, s.init_seed)?
        }
    };
    log::info!(
        "training on {} examples ({} skipped), {} parameters",
        built.examples.len(),
        built.skipped.len(),
        model.theta.len()
    );
    let outcome = train_student(&built.examples, &cfg.train, model)?;
    Checkpoint::new(&outcome.model, &vocab, provenance(cfg, "checkpoint")).save(out)?;
    if let Some(last) = outcome.loss_history.last() {
        log::info!("{} steps, final batch loss {last:.6}", outcome.loss_history.len());
    }
    log::info!("checkpoint written to {}", out.display());
    Ok(())
}

pub enum PredictionSource {
    File(PathBuf),
    Checkpoint(PathBuf),
    Backend,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionLine {
    pub id: String,
    pub prediction: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceLine {
    pub id: String,
    pub source: String,
    pub reference: String,
}

/// Ids, model inputs and truths for the configured task.
fn load_truths(cfg: &RunConfig, path: &Path) -> Result<(Vec<String>, Vec<String>, Truths)> {
    let ctx = || format!("reading {}", path.display());
    Ok(match cfg.eval.task {
        Task::Retail => {
            let set = retail::read_eval_set(path).with_context(ctx)?;
            (
                set.iter().map(|r| r.seed.to_string()).collect(),
                set.iter().map(|r| r.rendered_text.clone()).collect(),
                Truths::Retail(set.iter().map(|r| r.final_price_cents).collect()),
            )
        }
        Task::Translation => {
            let refs: Vec<ReferenceLine> = jsonl::read_records(path).with_context(ctx)?;
            (
                refs.iter().map(|r| r.id.clone()).collect(),
                refs.iter().map(|r| r.source.clone()).collect(),
                Truths::Translation(refs.into_iter().map(|r| r.reference).collect()),
            )
        }
    })
}

fn predict_with_checkpoint(cfg: &RunConfig, path: &Path, inputs: &[String]) -> Result<Vec<String>> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let model = ckpt.model()?;
    let stop = cfg.eval.stop.and_then(|c| ckpt.vocab.id(&c.to_string()));
    Ok(inputs
        .iter()
        .enumerate()
        .map(|(i, input)| match ckpt.vocab.encode(input) {
            Ok(ids) => ckpt.vocab.decode(&model.greedy(&ids, cfg.eval.max_new_tokens, stop)),
            Err(c) => {
                log::warn!("input {i} has out-of-vocabulary character {c:?}; predicting nothing");
                String::new()
            }
        })
        .collect())
}

fn predict_with_backend(cfg: &RunConfig, inputs: &[String]) -> Result<Vec<String>> {
    let backends = backends::build(cfg)?;
    let context: Vec<String> = if cfg.eval.with_context {
        let path = cfg.paths.units.as_ref().context("eval.with_context needs paths.units")?;
        context::read_units(path)?.into_iter().map(|u| u.text).collect()
    } else {
        Vec::new()
    };
    inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            let prompt = if context.is_empty() { input.clone() } else { prompts::rollout_prompt(input, &context) };
            let params = SamplingParams::new(0.0, cfg.eval.max_new_tokens as u32)
                .with_seed(derive_seed(cfg.pipeline.seed, &[i as u64]));
            let reply = backends.instruct.generate(&GenerationRequest { prompt, params })?;
            Ok(reply.text)
        })
        .collect()
}

fn read_predictions(path: &Path, ids: &[String]) -> Result<Vec<String>> {
    let lines: Vec<PredictionLine> =
        jsonl::read_records(path).with_context(|| format!("reading predictions {}", path.display()))?;
    let mut by_id: HashMap<String, String> = HashMap::with_capacity(lines.len());
    for l in lines {
        if by_id.insert(l.id.clone(), l.prediction).is_some() {
            bail!("duplicate prediction id {:?}", l.id);
        }
    }
    ensure!(by_id.len() == ids.len(), "{} predictions for {} queries", by_id.len(), ids.len());
    ids.iter()
        .map(|id| by_id.remove(id).with_context(|| format!("no prediction for id {id:?}")))
        .collect()
}

pub fn eval(cfg: &RunConfig, truths_path: &Path, source: &PredictionSource, out: &Path) -> Result<()> {
    let (ids, inputs, truths) = load_truths(cfg, truths_path)?;
    let predictions = match source {
        PredictionSource::File(p) => read_predictions(p, &ids)?,
        PredictionSource::Checkpoint(p) => predict_with_checkpoint(cfg, p, &inputs)?,
        PredictionSource::Backend => predict_with_backend(cfg, &inputs)?,
    };
    let report = evaluate(&ids, &predictions, &truths, &cfg.chrf)?;
    write_report(out, &provenance(cfg, "report"), &report).with_context(|| format!("writing {}", out.display()))?;
    match report.sentence_mean {
        Some(m) => log::info!("{} examples, corpus chrF {:.2}, sentence mean {m:.2}", report.n, report.metric),
        None => log::info!(
            "{} examples, accuracy {:.2}% ({} unparseable)",
            report.n,
            report.metric,
            report.parse_failures
        ),
    }
    Ok(())
}
