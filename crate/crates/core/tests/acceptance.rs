//! Acceptance checks. Runs as a plain binary and prints one line per
//! criterion; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ctxd_core::backend::{
    CachedBackend, GenerationBackend, HeuristicBackend, RequestCounter, Role, ScriptedBackend,
};
use ctxd_core::context::{chunk_corpus, reassemble, ChunkingConfig, ContextCorpus, ContextUnit};
use ctxd_core::distill::{grad_kl, mean_kl, truncate_topk, Architecture, DistillExample, StudentModel, TopKTarget};
use ctxd_core::eval::{chrf, ChrFParams};
use ctxd_core::jsonl::Provenance;
use ctxd_core::micro::{self, run_leg, LegConfig, MicroBackend};
use ctxd_core::retail::scripted::RetailBackend;
use ctxd_core::retail::{self, compute_price, generate_query, render_query, Amount, QueryGenConfig};
use ctxd_core::synth::{self, Backends, Mode, PipelineConfig, StageSampling, Verification};
use ctxd_core::tokenize::{Tokenizer, WhitespacePunct};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs as f64, || {
        format!("took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------------------
// 1. independent pricer

#[derive(Debug, Default)]
struct TextRule {
    customer: Option<String>,
    promo: Option<String>,
    min_total: Option<i64>,
    contains: Option<String>,
    category_min: Option<(String, i64)>,
    min_years: Option<u32>,
    total_percent: Option<i64>,
    category_percent: Option<(String, i64)>,
    fixed: Option<i64>,
}

fn dollars(s: &str) -> i64 {
    s.parse::<i64>().unwrap() * 100
}

/// Reads the rule list straight from its English text.
fn parse_rule_text(text: &str) -> Vec<TextRule> {
    let customer = Regex::new(r"customer is a (senior citizen|\w+)").unwrap();
    let promo = Regex::new(r"promo code is '(\w+)'").unwrap();
    let min_total = Regex::new(r"total spend is at least \$(\d+)").unwrap();
    let contains = Regex::new(r"cart contains (\w+)").unwrap();
    let cat_min = Regex::new(r"total (\w+) spend is \$(\d+) or greater").unwrap();
    let years = Regex::new(r"member for (\d+) or more years").unwrap();
    let total_pct = Regex::new(r"apply (\d+)% discount to total purchase").unwrap();
    let cat_pct = Regex::new(r"apply (\d+)% discount on (\w+) items only").unwrap();
    let fixed = Regex::new(r"apply \$(\d+) fixed discount").unwrap();
    text.lines()
        .filter(|l| l.starts_with("- If "))
        .map(|l| {
            let cap = |re: &Regex, i: usize| re.captures(l).map(|c| c[i].to_string());
            let rule = TextRule {
                customer: cap(&customer, 1).map(|c| if c == "senior citizen" { "senior".into() } else { c }),
                promo: cap(&promo, 1),
                min_total: cap(&min_total, 1).map(|d| dollars(&d)),
                contains: cap(&contains, 1),
                category_min: cat_min.captures(l).map(|c| (c[1].to_string(), dollars(&c[2]))),
                min_years: cap(&years, 1).map(|y| y.parse().unwrap()),
                total_percent: cap(&total_pct, 1).map(|p| p.parse().unwrap()),
                category_percent: cat_pct.captures(l).map(|c| (c[2].to_string(), c[1].parse().unwrap())),
                fixed: cap(&fixed, 1).map(|d| dollars(&d)),
            };
            let actions = [rule.total_percent.is_some(), rule.category_percent.is_some(), rule.fixed.is_some()];
            assert_eq!(actions.iter().filter(|a| **a).count(), 1, "rule without a unique action: {l}");
            rule
        })
        .collect()
}

struct TextQuery {
    customer: String,
    years: u32,
    promo: Option<String>,
    /// category -> line totals in cents
    lines: Vec<(String, i64)>,
}

/// Reads a rendered query back with its own regexes.
struct QueryParser {
    customer: Regex,
    years: Regex,
    promo: Regex,
    item: Regex,
}

impl QueryParser {
    fn new() -> Self {
        QueryParser {
            customer: Regex::new(r"(?m)^- Type: (.+)$").unwrap(),
            years: Regex::new(r"(?m)^- Membership years: (\d+)$").unwrap(),
            promo: Regex::new(r"(?m)^Promo code: (\S+)$").unwrap(),
            item: Regex::new(r"(?m)^- .+ \((\w+)\): \$(\d+)\.(\d\d) x (\d+)$").unwrap(),
        }
    }

    fn parse(&self, text: &str) -> TextQuery {
        let promo = self.promo.captures(text).unwrap()[1].to_string();
        TextQuery {
            customer: self.customer.captures(text).unwrap()[1].to_string(),
            years: self.years.captures(text).unwrap()[1].parse().unwrap(),
            promo: (promo != "None").then_some(promo),
            lines: self
                .item
                .captures_iter(text)
                .map(|c| {
                    let cents = c[2].parse::<i64>().unwrap() * 100 + c[3].parse::<i64>().unwrap();
                    (c[1].to_string(), cents * c[4].parse::<i64>().unwrap())
                })
                .collect(),
        }
    }
}

/// Final price in units of 1/10000 cent.
fn brute_force_price(q: &TextQuery, rules: &[TextRule]) -> i128 {
    let total: i64 = q.lines.iter().map(|l| l.1).sum();
    let mut by_cat: BTreeMap<&str, i64> = BTreeMap::new();
    for (c, v) in &q.lines {
        *by_cat.entry(c).or_default() += v;
    }
    let fires = |r: &TextRule| {
        r.customer.as_ref().is_none_or(|c| *c == q.customer)
            && r.promo.as_ref().is_none_or(|p| q.promo.as_ref() == Some(p))
            && r.min_total.is_none_or(|m| total >= m)
            && r.contains.as_ref().is_none_or(|c| by_cat.contains_key(c.as_str()))
            && r.category_min
                .as_ref()
                .is_none_or(|(c, m)| by_cat.get(c.as_str()).copied().unwrap_or(0) >= *m)
            && r.min_years.is_none_or(|y| q.years >= y)
    };
    let firing: Vec<&TextRule> = rules.iter().filter(|r| fires(r)).collect();
    // every combination of one category percent per category and one total
    // percent is tried; the lowest resulting price is the one the ordering
    // rules select, since each stage takes its highest discount
    let mut best_stage1: i128 = 0;
    for (cat, &sub) in &by_cat {
        let options: Vec<i64> = std::iter::once(0)
            .chain(firing.iter().filter_map(|r| match &r.category_percent {
                Some((c, p)) if c == cat => Some(*p),
                _ => None,
            }))
            .collect();
        best_stage1 += options.iter().map(|p| i128::from(sub) * i128::from(100 - p)).min().unwrap();
    }
    let totals: Vec<i64> = std::iter::once(0).chain(firing.iter().filter_map(|r| r.total_percent)).collect();
    let after_stage2 = totals.iter().map(|p| best_stage1 * i128::from(100 - p)).min().unwrap();
    let fixed: i64 = firing.iter().filter_map(|r| r.fixed).sum();
    (after_stage2 - i128::from(fixed) * 10_000).max(0)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rules = parse_rule_text(retail::RULES_TEXT);
    ensure(rules.len() == 30, || format!("parsed {} rules", rules.len()))?;
    let canonical = retail::canonical_rules();
    let cfg = QueryGenConfig::default();
    let parser = QueryParser::new();
    let n = 10_000u64;
    for seed in 0..n {
        let q = generate_query(seed, &cfg).map_err(|e| e.to_string())?;
        let exact = brute_force_price(&parser.parse(&render_query(&q)), &rules);
        let b = compute_price(&q, &canonical);
        ensure(b.final_exact == Amount(exact), || {
            format!("seed {seed}: engine {} vs independent {}", b.final_exact, Amount(exact))
        })?;
        let cents = i64::try_from((exact + 5_000) / 10_000).unwrap();
        ensure(b.final_price == cents, || format!("seed {seed}: rounding differs"))?;
    }
    within(start.elapsed(), 10)?;
    Ok(format!("{n} queries agree exactly in {:.2}s", start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 2. worked examples

fn criterion_2() -> Outcome {
    let golden = include_str!("golden_senior_query.txt");
    let senior = retail::parse_rendered_query(golden).map_err(|e| e.to_string())?;
    let rules = retail::canonical_rules();
    let b = compute_price(&senior, &rules);
    let dollars = b.final_exact.0 as f64 / 1e6;
    ensure((dollars - 214.20).abs() <= 0.005, || format!("senior example priced {dollars}"))?;
    ensure(b.final_price == 21_420, || format!("senior example rounds to {}", b.final_price))?;
    ensure(b.after_stage1 == Amount::from_cents(25_200), || "stage 1 total is not $252.00".into())?;

    let regular = retail::RetailQuery {
        customer: retail::CustomerType::Regular,
        membership_years: 0,
        cart: vec![retail::CartItem {
            name: "Pasta".into(),
            category: retail::ProductCategory::Food,
            unit_price_cents: 1_000,
            quantity: 1,
        }],
        promo: None,
    };
    ensure(compute_price(&regular, &rules).final_price == 1_000, || "regular example".into())?;

    let student = retail::RetailQuery {
        customer: retail::CustomerType::Student,
        membership_years: 0,
        cart: vec![retail::CartItem {
            name: "Novel".into(),
            category: retail::ProductCategory::Books,
            unit_price_cents: 4_500,
            quantity: 1,
        }],
        promo: Some(retail::PromoCode::Welcome10),
    };
    let s = compute_price(&student, &rules);
    ensure(s.after_stage1 == Amount::from_cents(3_825), || "student stage 1 is not $38.25".into())?;
    ensure(s.final_price == 2_825, || format!("student example priced {}", s.final_price))?;
    Ok(format!("$214.20 (exact {}), $10.00 and $28.25 reproduce", b.final_exact))
}

// ---------------------------------------------------------------------------
// 3. chrF

/// Clipped matches by pairing each hypothesis n-gram with an unused equal
/// reference n-gram.
fn oracle_chrf(hyp: &str, reference: &str, max_order: usize, beta: f64) -> f64 {
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0);
    for n in 1..=max_order {
        if r.len() < n {
            continue;
        }
        orders += 1;
        let hg: Vec<&[char]> = if h.len() >= n { (0..=h.len() - n).map(|i| &h[i..i + n]).collect() } else { vec![] };
        let rg: Vec<&[char]> = (0..=r.len() - n).map(|i| &r[i..i + n]).collect();
        let mut used = vec![false; rg.len()];
        let mut matches = 0usize;
        for g in &hg {
            if let Some(j) = (0..rg.len()).find(|&j| !used[j] && rg[j] == *g) {
                used[j] = true;
                matches += 1;
            }
        }
        if !hg.is_empty() {
            p_sum += matches as f64 / hg.len() as f64;
        }
        r_sum += matches as f64 / rg.len() as f64;
    }
    if orders == 0 {
        return 0.0;
    }
    let (p, rc) = (p_sum / orders as f64, r_sum / orders as f64);
    let b2 = beta * beta;
    if b2 * p + rc == 0.0 { 0.0 } else { 100.0 * (1.0 + b2) * p * rc / (b2 * p + rc) }
}

fn random_text(rng: &mut ChaCha8Rng, alphabet: &[char], len: usize) -> String {
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let params = ChrFParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let alphabet: Vec<char> = "abcde fgh".chars().collect();
    let mut worst = 0.0f64;
    for i in 0..200 {
        let (la, lb) = (rng.gen_range(1..=200), rng.gen_range(1..=200));
        let a = random_text(&mut rng, &alphabet, la);
        let mut b = random_text(&mut rng, &alphabet, lb);
        if b.trim().is_empty() {
            b.push('a');
        }
        let got = chrf(&a, &b, &params).map_err(|e| e.to_string())?;
        let want = oracle_chrf(&a, &b, params.max_char_order, params.beta);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() < 1e-6, || format!("pair {i}: {got} vs oracle {want}"))?;
    }
    for s in ["a", "hello world", "xyzxyzxyz"] {
        let v = chrf(s, s, &params).map_err(|e| e.to_string())?;
        ensure((v - 100.0).abs() < 1e-9, || format!("chrf({s:?}, itself) = {v}"))?;
    }
    let v = chrf("abcabc", "xyzzy", &params).map_err(|e| e.to_string())?;
    ensure(v == 0.0, || format!("disjoint alphabets scored {v}"))?;
    within(start.elapsed(), 5)?;
    Ok(format!("200 pairs, max |diff| {worst:.2e}, {:.2}s", start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 4. gradient check

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut probes = 0;
    for trial in 0..5u64 {
        let v = rng.gen_range(4..12);
        let arch = Architecture {
            vocab_size: v,
            window: rng.gen_range(2..6),
            embed_dim: rng.gen_range(3..8),
            hidden: rng.gen_range(4..12),
        };
        let teacher = StudentModel::init(arch, 100 + trial).map_err(|e| e.to_string())?;
        let student = StudentModel::init(arch, 200 + trial).map_err(|e| e.to_string())?;
        let k = rng.gen_range(1..=v);
        let tau = rng.gen_range(0.5..2.0);
        let batch: Vec<DistillExample> = (0..rng.gen_range(1..5))
            .map(|_| {
                let input: Vec<usize> = (0..rng.gen_range(1..7)).map(|_| rng.gen_range(0..v)).collect();
                let response: Vec<usize> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..v)).collect();
                let targets = teacher
                    .response_logits(&input, &response)
                    .iter()
                    .enumerate()
                    .map(|(position, z)| TopKTarget { position, entries: truncate_topk(z, k).unwrap() })
                    .collect();
                DistillExample {
                    example_id: 0,
                    rollout_index: 0,
                    student_input: input.clone(),
                    teacher_input: input,
                    response,
                    targets,
                }
            })
            .collect();
        let (_, grad) = grad_kl(&student, &batch, tau).map_err(|e| e.to_string())?;
        for _ in 0..12 {
            let i = rng.gen_range(0..student.theta.len());
            let (mut plus, mut minus) = (student.clone(), student.clone());
            plus.theta[i] += h;
            minus.theta[i] -= h;
            let fd = (mean_kl(&plus, &batch, tau).unwrap() - mean_kl(&minus, &batch, tau).unwrap()) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            worst = worst.max(rel);
            probes += 1;
            ensure(rel < 1e-4, || format!("model {trial} coordinate {i}: {} vs {fd}", grad[i]))?;
        }
    }
    within(start.elapsed(), 30)?;
    Ok(format!("{probes} probes over 5 models, max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------------------
// 5 and 6. micro task

fn criterion_5(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let config = LegConfig::new(Mode::Applicable);
    let (report, a) = run_leg(&config, dir).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (_, b) = run_leg(&config, dir).map_err(|e| e.to_string())?;
    let bits = |h: &[f64]| h.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a.loss_history) == bits(&b.loss_history) && a.model == b.model, || {
        "two runs with the same seed differ".into()
    })?;
    let reduction = 1.0 - report.kl_final / report.kl_init;
    ensure(report.agreement >= 0.90, || format!("held-out argmax agreement {:.3}", report.agreement))?;
    ensure(reduction >= 0.80, || format!("KL reduced by {:.1}%", 100.0 * reduction))?;
    within(elapsed, 300)?;
    Ok(format!(
        "agreement {:.1}% on {} held-out queries, KL {:.3} -> {:.3} ({:.1}% lower), {:.1}s, deterministic",
        100.0 * report.agreement,
        report.heldout_queries,
        report.kl_init,
        report.kl_final,
        100.0 * reduction,
        elapsed.as_secs_f64()
    ))
}

fn criterion_6(dir: &std::path::Path) -> Outcome {
    let mut acc = Vec::new();
    for mode in [Mode::Applicable, Mode::AllContext, Mode::SeedsOnly] {
        let start = Instant::now();
        let (report, _) = run_leg(&LegConfig::new(mode), dir).map_err(|e| e.to_string())?;
        within(start.elapsed(), 300)?;
        acc.push((mode, report.accuracy));
    }
    let line = acc
        .iter()
        .map(|(m, a)| format!("{} {:.1}%", m.as_str(), 100.0 * a))
        .collect::<Vec<_>>()
        .join(" > ");
    ensure(acc[0].1 > acc[1].1 && acc[1].1 > acc[2].1, || format!("ordering violated: {line}"))?;
    Ok(line)
}

// ---------------------------------------------------------------------------
// 7. pipeline equivalences

fn units_from(texts: &[String]) -> Vec<ContextUnit> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| ContextUnit { unit_id: i, source_chunk: 0, text: t.clone() })
        .collect()
}

fn keyword_backend() -> ScriptedBackend {
    ScriptedBackend::from_text(Role::Instruct, |req| {
        use ctxd_core::backend::scripted::shares_keyword;
        use ctxd_core::prompts::{parse_verify_batch, parse_verify_unit};
        if let Some((q, u)) = parse_verify_unit(&req.prompt) {
            return if shares_keyword(&q, &u) { "yes, it is needed".into() } else { "no".into() };
        }
        match parse_verify_batch(&req.prompt) {
            Some((q, us)) => {
                let ids: Vec<String> = us.iter().filter(|(_, u)| shares_keyword(&q, u)).map(|(i, _)| format!("[{i}]")).collect();
                if ids.is_empty() { "None of them.".into() } else { ids.join(" ") }
            }
            None => String::new(),
        }
    })
}

fn check_verification() -> Result<usize, String> {
    let retail_units: Vec<ContextUnit> =
        units_from(&retail::canonical_rules().into_iter().map(|r| r.text).collect::<Vec<_>>());
    let micro_units: Vec<ContextUnit> =
        units_from(&micro::corpus_text().lines().skip(1).map(String::from).collect::<Vec<_>>());
    let retail_queries: Vec<String> =
        (0..8).map(|s| render_query(&generate_query(500 + s, &QueryGenConfig::default()).unwrap())).collect();
    let micro_queries: Vec<String> = micro::all_queries().into_iter().step_by(17).collect();
    let backends: Vec<(&str, Box<dyn GenerationBackend>, &[ContextUnit], &[String])> = vec![
        ("heuristic/retail", Box::new(HeuristicBackend::new(Role::Instruct)), &retail_units, &retail_queries),
        ("retail", Box::new(RetailBackend::new(Role::Instruct)), &retail_units, &retail_queries),
        ("micro", Box::new(MicroBackend::new(Role::Instruct)), &micro_units, &micro_queries),
        ("keyword", Box::new(keyword_backend()), &retail_units, &retail_queries),
    ];
    let sampling = StageSampling::new(0.0, 64);
    let mut checks = 0;
    for (name, backend, units, queries) in &backends {
        for q in queries.iter() {
            let per_unit = synth::verify(q, units, backend.as_ref(), Verification::PerUnit, &sampling, 1)
                .map_err(|e| e.to_string())?;
            for batch_size in [1, 2, 3, 4, 7, 16, 64] {
                let batched =
                    synth::verify(q, units, backend.as_ref(), Verification::Batched { batch_size }, &sampling, 1)
                        .map_err(|e| e.to_string())?;
                ensure(batched == per_unit, || format!("{name}: batch {batch_size} differs on {q:?}"))?;
                checks += 1;
            }
        }
    }
    Ok(checks)
}

fn check_warm_cache(dir: &std::path::Path) -> Result<usize, String> {
    type Make = fn() -> (Box<dyn GenerationBackend>, Box<dyn GenerationBackend>, RequestCounter, RequestCounter);
    fn heuristic() -> (Box<dyn GenerationBackend>, Box<dyn GenerationBackend>, RequestCounter, RequestCounter) {
        let (b, i) = (HeuristicBackend::new(Role::BaseCompletion), HeuristicBackend::new(Role::Instruct));
        let (cb, ci) = (b.counter(), i.counter());
        (Box::new(b), Box::new(i), cb, ci)
    }
    fn retail_backend() -> (Box<dyn GenerationBackend>, Box<dyn GenerationBackend>, RequestCounter, RequestCounter) {
        let (b, i) = (RetailBackend::new(Role::BaseCompletion), RetailBackend::new(Role::Instruct));
        let (cb, ci) = (b.counter(), i.counter());
        (Box::new(b), Box::new(i), cb, ci)
    }
    fn micro_backend() -> (Box<dyn GenerationBackend>, Box<dyn GenerationBackend>, RequestCounter, RequestCounter) {
        let (b, i) = (MicroBackend::new(Role::BaseCompletion), MicroBackend::new(Role::Instruct));
        let (cb, ci) = (b.counter(), i.counter());
        (Box::new(b), Box::new(i), cb, ci)
    }
    let cases: [(&str, Make, String, Verification); 3] = [
        ("heuristic", heuristic, retail::RULES_TEXT.to_string(), Verification::Batched { batch_size: 5 }),
        ("retail", retail_backend, retail::RULES_TEXT.to_string(), Verification::PerUnit),
        ("micro", micro_backend, micro::corpus_text(), Verification::Batched { batch_size: 4 }),
    ];
    let mut cold_total = 0;
    for (name, make, text, verification) in cases {
        let corpus = ContextCorpus::new(name, text, &WhitespacePunct).map_err(|e| e.to_string())?;
        let cache = dir.join(format!("cache-{name}"));
        let config = PipelineConfig {
            n: 12,
            n_rollouts: 2,
            verification,
            example_queries: micro::example_queries(),
            seed: 31,
            ..Default::default()
        };
        let mut files = Vec::new();
        let mut requests = Vec::new();
        for run in 0..2 {
            let (base, instruct, cb, ci) = make();
            let backends = Backends {
                base: Box::new(CachedBackend::new(base, &cache).map_err(|e| e.to_string())?),
                instruct: Box::new(CachedBackend::new(instruct, &cache).map_err(|e| e.to_string())?),
            };
            let out = dir.join(format!("{name}-{run}.jsonl"));
            synth::run_pipeline(&corpus, &backends, &config, &Provenance::new("dataset", "acceptance"), &out)
                .map_err(|e| format!("{name}: {e}"))?;
            files.push(std::fs::read(&out).map_err(|e| e.to_string())?);
            requests.push(cb.get() + ci.get());
        }
        ensure(requests[0] > 0 && requests[1] == 0, || format!("{name}: requests {requests:?}"))?;
        ensure(files[0] == files[1], || format!("{name}: warm rerun changed the dataset"))?;
        cold_total += requests[0];
    }
    Ok(cold_total)
}

fn random_corpus(rng: &mut ChaCha8Rng, tokens: usize) -> String {
    let words = ["rule", "discount", "the", "customer", "applies", "ünïcode", "ζ", "12", "$50", "x"];
    let punct = [",", ".", ";", "(", ")", "%", "'"];
    let spaces = [" ", " ", " ", "\n", "  ", "\t", "\n\n"];
    let mut s = String::new();
    if rng.gen_bool(0.3) {
        s.push_str("  ");
    }
    for _ in 0..tokens {
        if rng.gen_bool(0.15) {
            s.push_str(punct[rng.gen_range(0..punct.len())]);
        } else {
            s.push_str(spaces[rng.gen_range(0..spaces.len())]);
            s.push_str(words[rng.gen_range(0..words.len())]);
        }
    }
    if rng.gen_bool(0.3) {
        s.push('\n');
    }
    s
}

fn check_chunking() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let tok = WhitespacePunct;
    let mut largest = 0;
    let sizes = [1usize, 7, 500, 8_192, 20_000, 65_536, 90_000];
    for (i, &approx) in sizes.iter().enumerate() {
        let text = random_corpus(&mut rng, approx);
        let corpus = ContextCorpus::new(format!("c{i}"), text.clone(), &tok).map_err(|e| e.to_string())?;
        largest = largest.max(corpus.token_count);
        let mut configs = vec![
            ChunkingConfig::default(),
            ChunkingConfig { chunk_tokens: rng.gen_range(2..3_000), overlap_tokens: 1 },
        ];
        // stride 1 re-tokenizes every chunk, so keep it to the smaller corpora
        if approx <= 20_000 {
            configs.push(ChunkingConfig { chunk_tokens: 200, overlap_tokens: 199 });
        }
        for config in configs {
            let chunks = chunk_corpus(&corpus, config).map_err(|e| e.to_string())?;
            ensure(reassemble(&chunks) == text, || format!("corpus {i} {config:?}: reassembly differs"))?;
            let all: Vec<String> = tok.spans(&text).into_iter().map(|r| text[r].to_string()).collect();
            ensure(chunks[0].token_range.start == 0, || "first chunk does not start at 0".into())?;
            ensure(chunks.last().unwrap().token_range.end == all.len(), || "last chunk does not reach the end".into())?;
            for c in &chunks {
                let toks: Vec<String> = tok.spans(&c.text).into_iter().map(|r| c.text[r].to_string()).collect();
                ensure(toks.len() <= config.chunk_tokens, || format!("chunk {} too long", c.index))?;
                ensure(toks == all[c.token_range.clone()], || format!("chunk {} tokens differ", c.index))?;
            }
            for w in chunks.windows(2) {
                let shared = w[0].token_range.end.saturating_sub(w[1].token_range.start);
                ensure(shared == config.overlap_tokens, || format!("overlap {shared} != {}", config.overlap_tokens))?;
                let tail: Vec<&str> = tok.spans(&w[0].text).into_iter().rev().take(shared).map(|r| &w[0].text[r]).collect();
                let head: Vec<&str> = tok.spans(&w[1].text).into_iter().take(shared).map(|r| &w[1].text[r]).collect();
                ensure(tail.into_iter().rev().eq(head), || "overlap text differs".into())?;
            }
        }
    }
    Ok(largest)
}

fn criterion_7(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let checks = check_verification()?;
    let cold = check_warm_cache(dir)?;
    let largest = check_chunking()?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "{checks} batched/per-unit comparisons, warm reruns silent ({cold} cold requests), chunking up to {largest} tokens, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 8. golden rendering

fn criterion_8() -> Outcome {
    let golden = include_str!("golden_senior_query.txt");
    let item = |name: &str, category, dollars: i64, quantity| retail::CartItem {
        name: name.into(),
        category,
        unit_price_cents: dollars * 100,
        quantity,
    };
    let q = retail::RetailQuery {
        customer: retail::CustomerType::Senior,
        membership_years: 4,
        cart: vec![
            item("Shoes", retail::ProductCategory::Clothing, 85, 2),
            item("Jacket", retail::ProductCategory::Clothing, 60, 1),
            item("Coffee Maker", retail::ProductCategory::Home, 45, 1),
        ],
        promo: None,
    };
    let rendered = render_query(&q);
    if rendered != golden {
        let line = rendered.lines().zip(golden.lines()).position(|(a, b)| a != b);
        return Err(format!("rendering differs from the golden file at line {line:?}"));
    }
    Ok(format!("{} bytes match the golden file", golden.len()))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("retail oracle agreement", Box::new(criterion_1)),
        ("worked retail examples", Box::new(criterion_2)),
        ("chrF against exhaustive oracle", Box::new(criterion_3)),
        ("gradient check", Box::new(criterion_4)),
        ("micro-task distillation", Box::new(|| criterion_5(dir.path()))),
        ("mode ordering", Box::new(|| criterion_6(dir.path()))),
        ("pipeline equivalences", Box::new(|| criterion_7(dir.path()))),
        ("format fidelity", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
