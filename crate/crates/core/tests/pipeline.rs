use std::collections::BTreeSet;

use ctxd_core::backend::{HeuristicBackend, Role};
use ctxd_core::context::ContextCorpus;
use ctxd_core::jsonl::Provenance;
use ctxd_core::retail::scripted::RetailBackend;
use ctxd_core::retail::{self, Applicability};
use ctxd_core::synth::{self, Backends, Mode, PipelineConfig, Verification, VerificationTally};
use ctxd_core::tokenize::WhitespacePunct;

fn corpus() -> ContextCorpus {
    ContextCorpus::new("retail", retail::RULES_TEXT, &WhitespacePunct).unwrap()
}

fn examples() -> Vec<String> {
    (0..3)
        .map(|s| retail::render_query(&retail::generate_query(1000 + s, &Default::default()).unwrap()))
        .collect()
}

fn config(mode: Mode, n: usize) -> PipelineConfig {
    PipelineConfig {
        mode,
        n,
        n_rollouts: 2,
        example_queries: examples(),
        seed: 42,
        workers: 3,
        ..Default::default()
    }
}

fn heuristic() -> (Backends, [ctxd_core::backend::RequestCounter; 2]) {
    let base = HeuristicBackend::new(Role::BaseCompletion);
    let inst = HeuristicBackend::new(Role::Instruct);
    let counters = [base.counter(), inst.counter()];
    (Backends::new(base, inst), counters)
}

#[test]
fn sieve_run_is_schema_valid_and_filtered() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data.jsonl");
    let (backends, _) = heuristic();
    let cfg = config(Mode::Applicable, 8);
    let (units, report) =
        synth::run_pipeline(&corpus(), &backends, &cfg, &Provenance::new("dataset", "h"), &out).unwrap();
    assert_eq!(units.len(), 30);
    assert_eq!(report.written + report.skipped.len(), 8);
    let (meta, data) = synth::read_dataset(&out).unwrap();
    assert_eq!(meta.unwrap().config_hash, "h");
    assert_eq!(data.len(), report.written);
    let ids: BTreeSet<usize> = units.iter().map(|u| u.unit_id).collect();
    for ex in &data {
        assert!(ex.applicable_unit_ids.iter().all(|i| ids.contains(i)));
        assert!(!ex.seed_unit_ids.is_empty());
        assert_eq!(ex.rollouts.len(), 2);
        // every unit in the teacher prompt was verified applicable
        assert_eq!(ex.rollout_context_ids, ex.applicable_unit_ids);
        for id in &ex.rollout_context_ids {
            assert!(ex.teacher_input.contains(&units[*id].text));
        }
    }
}

#[test]
fn warm_cache_rerun_is_silent_and_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let run = |name: &str| {
        let (backends, counters) = heuristic();
        let backends = backends.cached(&cache).unwrap();
        let cfg = PipelineConfig {
            verification: Verification::Batched { batch_size: 4 },
            ..config(Mode::Applicable, 6)
        };
        let out = dir.path().join(name);
        synth::run_pipeline(&corpus(), &backends, &cfg, &Provenance::new("dataset", "h"), &out).unwrap();
        (std::fs::read(&out).unwrap(), counters[0].get() + counters[1].get())
    };
    let (cold, cold_requests) = run("a.jsonl");
    assert!(cold_requests > 0);
    let (warm, warm_requests) = run("b.jsonl");
    assert_eq!(warm_requests, 0);
    assert_eq!(cold, warm);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: usize| {
        let (backends, _) = heuristic();
        let cfg = PipelineConfig { workers, ..config(Mode::AllContext, 5) };
        let out = dir.path().join(name);
        synth::run_pipeline(&corpus(), &backends, &cfg, &Provenance::new("dataset", "h"), &out).unwrap();
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a", 1), run("b", 4));
}

#[test]
fn seeds_only_uses_example_queries_with_full_context() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data.jsonl");
    let (backends, _) = heuristic();
    let cfg = config(Mode::SeedsOnly, 100);
    synth::run_pipeline(&corpus(), &backends, &cfg, &Provenance::new("dataset", "h"), &out).unwrap();
    let (_, data) = synth::read_dataset(&out).unwrap();
    assert_eq!(data.len(), 3);
    for (ex, q) in data.iter().zip(examples()) {
        assert_eq!(ex.query, q);
        assert_eq!(ex.rollout_context_ids, (0..30).collect::<Vec<_>>());
        assert!(ex.seed_unit_ids.is_empty());
    }
}

#[test]
fn skip_budget_is_enforced() {
    use ctxd_core::backend::ScriptedBackend;
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data.jsonl");
    let backends = Backends::new(
        ScriptedBackend::fixed(Role::BaseCompletion, " unrelated words"),
        HeuristicBackend::new(Role::Instruct),
    );
    let err = synth::run_pipeline(&corpus(), &backends, &config(Mode::Applicable, 4), &Provenance::new("d", "h"), &out)
        .unwrap_err();
    assert!(matches!(err, synth::SynthError::SkipBudget { skipped: 4, .. }));
}

#[test]
fn retail_verification_quality_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data.jsonl");
    let backends = Backends::new(RetailBackend::new(Role::BaseCompletion), RetailBackend::new(Role::Instruct));
    let cfg = config(Mode::Applicable, 10);
    let (units, _) =
        synth::run_pipeline(&corpus(), &backends, &cfg, &Provenance::new("d", "h"), &out).unwrap();
    let (_, data) = synth::read_dataset(&out).unwrap();
    let rules = retail::canonical_rules();
    let mut tally = VerificationTally::default();
    for ex in &data {
        let q = retail::parse_rendered_query(&ex.query).unwrap();
        let truth_rules = retail::applicable_rules(&q, &rules, Applicability::ConditionHolds);
        let truth: BTreeSet<usize> = units
            .iter()
            .filter(|u| retail::rule_by_text(&rules, &u.text).is_some_and(|r| truth_rules.contains(&r.rule_id)))
            .map(|u| u.unit_id)
            .collect();
        tally.add(&ex.applicable_unit_ids.iter().copied().collect(), &truth);
    }
    // the scripted verifier uses the exact predicate
    assert_eq!(tally.precision(), 1.0);
    assert_eq!(tally.recall(), 1.0);
    assert!(tally.true_positive > 0);
}
