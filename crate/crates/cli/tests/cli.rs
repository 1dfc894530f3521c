use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctxd_core::retail;

fn ctxd(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxd"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("run ctxd")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "ctxd failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn records(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        std::fs::write(dir.path().join("rules.txt"), retail::RULES_TEXT).unwrap();
        std::fs::write(dir.path().join("micro.txt"), ctxd_core::micro::corpus_text()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        ctxd(&self.path("run.toml"), args)
    }
}

fn retail_examples() -> String {
    let qs: Vec<String> = (0..3)
        .map(|s| retail::render_query(&retail::generate_query(900 + s, &Default::default()).unwrap()))
        .collect();
    format!("example_queries = {}\n", serde_json::to_string(&qs).unwrap())
}

#[test]
fn retail_default_is_256_seeded_queries() {
    let ws = Workspace::new("");
    ok(ws.run(&["retail", "--out", ws.path("eval.jsonl").to_str().unwrap()]));
    let recs = records(&ws.path("eval.jsonl"));
    assert_eq!(recs[0]["record"], "meta");
    assert_eq!(recs[0]["config_hash"].as_str().unwrap().len(), 64);
    assert!(recs[0]["code_version"].is_string());
    let seeds: Vec<u64> = recs[1..].iter().map(|r| r["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, (0..256).collect::<Vec<_>>());
}

#[test]
fn seeds_only_generates_three_records() {
    let ws = Workspace::new(&format!(
        "[paths]\ncorpus = \"rules.txt\"\ndataset = \"data.jsonl\"\n[pipeline]\nmode = \"seeds-only\"\n{}",
        retail_examples()
    ));
    ok(ws.run(&["generate"]));
    let recs = records(&ws.path("data.jsonl"));
    assert_eq!(recs.len(), 4);
    assert_eq!(recs[0]["mode"], "seeds-only");
    assert!(recs[1..].iter().all(|r| r["record"] == "example"));
}

#[test]
fn warm_cache_rerun_is_identical_and_adds_no_entries() {
    let ws = Workspace::new(&format!(
        "seed = 5\n[paths]\ncorpus = \"rules.txt\"\n[pipeline]\nn = 6\nn_rollouts = 2\ncache_dir = \"cache\"\nverification = {{ batched = {{ batch_size = 4 }} }}\n{}",
        retail_examples()
    ));
    let entries = || std::fs::read_dir(ws.path("cache")).unwrap().count();
    ok(ws.run(&["generate", "--out", ws.path("a.jsonl").to_str().unwrap()]));
    let cold = entries();
    assert!(cold > 0);
    ok(ws.run(&["generate", "--out", ws.path("b.jsonl").to_str().unwrap()]));
    assert_eq!(entries(), cold);
    assert_eq!(std::fs::read(ws.path("a.jsonl")).unwrap(), std::fs::read(ws.path("b.jsonl")).unwrap());
}

#[test]
fn decompose_then_generate_reuses_units() {
    let ws = Workspace::new(&format!(
        "[backend]\nkind = \"scripted-retail\"\n[paths]\ncorpus = \"rules.txt\"\nunits = \"units.jsonl\"\ndataset = \"data.jsonl\"\n[pipeline]\nn = 4\n{}",
        retail_examples()
    ));
    ok(ws.run(&["decompose"]));
    let units = records(&ws.path("units.jsonl"));
    assert_eq!(units.len(), 31);
    ok(ws.run(&["generate"]));
    let data = records(&ws.path("data.jsonl"));
    assert_eq!(data[0]["n_units"], 30);
    assert_eq!(data.len(), 5);
}

#[test]
fn schema_violations_fail_before_running() {
    let ws = Workspace::new("[pipeline]\nmodee = \"sieve\"\n");
    let out = ws.run(&["retail", "--out", ws.path("x.jsonl").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("modee"));
    assert!(!ws.path("x.jsonl").exists());

    let ws = Workspace::new("[backend]\nkind = \"http\"\n");
    let out = ws.run(&["retail", "--out", ws.path("x.jsonl").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[backend.base]"));
}

#[test]
fn unreachable_backend_exits_non_zero() {
    let endpoint = "base_url = \"http://127.0.0.1:9/v1\"\nmodel = \"m\"\nmax_retries = 0\ntimeout_secs = 5\n";
    let ws = Workspace::new(&format!(
        "[backend]\nkind = \"http\"\n[backend.base]\n{endpoint}[backend.instruct]\n{endpoint}"
    ));
    let out = ws.run(&[
        "decompose",
        "--corpus",
        ws.path("rules.txt").to_str().unwrap(),
        "--out",
        ws.path("units.jsonl").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn micro_generate_train_eval() {
    let config = "seed = 3\n[backend]\nkind = \"scripted-micro\"\n[paths]\ncorpus = \"micro.txt\"\ndataset = \"data.jsonl\"\ncheckpoint = \"student.json\"\n\
         [pipeline]\nn = 12\ncapture_top_logprobs = 5\nexample_queries = [\"sc?\", \"vbh?\", \"rpk?\"]\n\
         [train]\nlearning_rate = 0.003\neffective_batch = 4\nwarmup_steps = 2\nepochs = 2\n";
    let ws = Workspace::new(config);
    ok(ws.run(&["generate"]));
    ok(ws.run(&["train"]));
    let ckpt: serde_json::Value = serde_json::from_slice(&std::fs::read(ws.path("student.json")).unwrap()).unwrap();
    assert_eq!(ckpt["provenance"]["kind"], "checkpoint");

    // resuming from the checkpoint also works
    ok(ws.run(&["train", "--init", ws.path("student.json").to_str().unwrap(), "--out", ws.path("again.json").to_str().unwrap()]));

    // micro-teacher targets train the same student shape
    let mt = ws.path("mt.toml");
    std::fs::write(&mt, format!("{config}[student]\ntargets = \"micro-teacher\"\n")).unwrap();
    ok(ctxd(&mt, &["train", "--out", ws.path("mt.json").to_str().unwrap()]));

    std::fs::write(
        ws.path("refs.jsonl"),
        "{\"id\":\"a\",\"source\":\"sc?\",\"reference\":\"30.\"}\n{\"id\":\"b\",\"source\":\"rf?\",\"reference\":\"08.\"}\n",
    )
    .unwrap();
    ok(ws.run(&[
        "eval",
        "--task",
        "translation",
        "--references",
        ws.path("refs.jsonl").to_str().unwrap(),
        "--checkpoint",
        ws.path("student.json").to_str().unwrap(),
        "--out",
        ws.path("report.jsonl").to_str().unwrap(),
    ]));
    let report = records(&ws.path("report.jsonl"));
    assert_eq!(report.last().unwrap()["record"], "summary");
    assert_eq!(report.last().unwrap()["n"], 2);
}

#[test]
fn eval_scores_a_predictions_file() {
    let ws = Workspace::new("[retail]\ncount = 4\n");
    let eval_set = ws.path("eval.jsonl");
    ok(ws.run(&["retail", "--out", eval_set.to_str().unwrap()]));
    let preds: String = records(&eval_set)[1..]
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let answer = if i == 0 { "no idea".to_string() } else { format!("Final price: ${}", r["final_price"].as_str().unwrap()) };
            format!("{}\n", serde_json::json!({"id": r["seed"].to_string(), "prediction": answer}))
        })
        .collect();
    std::fs::write(ws.path("preds.jsonl"), preds).unwrap();
    ok(ws.run(&[
        "eval",
        "--eval-set",
        eval_set.to_str().unwrap(),
        "--predictions",
        ws.path("preds.jsonl").to_str().unwrap(),
        "--out",
        ws.path("report.jsonl").to_str().unwrap(),
    ]));
    let summary = records(&ws.path("report.jsonl")).pop().unwrap();
    assert_eq!(summary["metric"], 75.0);
    assert_eq!(summary["parse_failures"], 1);
}
