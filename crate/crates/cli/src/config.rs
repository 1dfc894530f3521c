//! The run configuration document.
//!
//! One TOML file drives every subcommand. Unknown keys are rejected and the
//! whole document is validated before any stage runs. Relative paths are
//! resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ctxd_core::backend::HttpBackendConfig;
use ctxd_core::distill::TrainConfig;
use ctxd_core::eval::{ChrFParams, Task};
use ctxd_core::retail::QueryGenConfig;
use ctxd_core::synth::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `pipeline.seed` and `train.seed` when set.
    pub seed: Option<u64>,
    /// Overrides `pipeline.workers` when set.
    pub workers: Option<usize>,
    pub tokenizer: TokenizerChoice,
    pub paths: Paths,
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub student: StudentConfig,
    pub chrf: ChrFParams,
    pub eval: EvalConfig,
    pub retail: RetailConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerChoice {
    #[default]
    WhitespacePunct,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub units: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub eval_set: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    ScriptedHeuristic,
    ScriptedRetail,
    ScriptedMicro,
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Endpoint for seed selection and rollouts (http only).
    pub base: Option<HttpBackendConfig>,
    /// Endpoint for decomposition, queries and verification (http only).
    pub instruct: Option<HttpBackendConfig>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetChoice {
    /// Teacher scores captured with the rollouts.
    #[default]
    Captured,
    /// Recompute scores with the built-in micro-task teacher.
    MicroTeacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    pub window: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub init_seed: u64,
    pub targets: TargetChoice,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            window: 8,
            embed_dim: 16,
            hidden: 64,
            init_seed: 0,
            targets: TargetChoice::Captured,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub task: Task,
    /// Longest greedy continuation when predicting with a checkpoint.
    pub max_new_tokens: usize,
    /// Greedy decoding stops after emitting this character.
    pub stop: Option<char>,
    /// Backend predictions see every unit from the units file.
    pub with_context: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            task: Task::Retail,
            max_new_tokens: 64,
            stop: None,
            with_context: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetailConfig {
    pub count: u64,
    pub first_seed: u64,
    pub generator: QueryGenConfig,
}

impl Default for RetailConfig {
    fn default() -> Self {
        Self {
            count: 256,
            first_seed: 0,
            generator: QueryGenConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_overrides();
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.corpus,
            &mut p.units,
            &mut p.dataset,
            &mut p.checkpoint,
            &mut p.eval_set,
            &mut p.predictions,
            &mut p.references,
            &mut p.report,
            &mut self.pipeline.cache_dir,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    /// Folds the global seed and worker count into the stage configs.
    pub fn apply_overrides(&mut self) {
        if let Some(seed) = self.seed {
            self.pipeline.seed = seed;
            self.train.seed = seed;
        }
        if let Some(workers) = self.workers {
            self.pipeline.workers = workers;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate().context("[pipeline]")?;
        self.train.validate().context("[train]")?;
        self.chrf.validate().context("[chrf]")?;
        self.retail.generator.validate().context("[retail.generator]")?;
        if self.retail.count == 0 {
            bail!("[retail] count must be at least 1");
        }
        if self.retail.first_seed.checked_add(self.retail.count).is_none() {
            bail!("[retail] seed range overflows");
        }
        let s = &self.student;
        if s.window == 0 || s.embed_dim == 0 || s.hidden == 0 {
            bail!("[student] window, embed_dim and hidden must be at least 1");
        }
        if self.eval.max_new_tokens == 0 {
            bail!("[eval] max_new_tokens must be at least 1");
        }
        let b = &self.backend;
        match b.kind {
            BackendKind::Http => {
                for (name, endpoint) in [("base", &b.base), ("instruct", &b.instruct)] {
                    let Some(e) = endpoint else {
                        bail!("[backend] kind = \"http\" needs a [backend.{name}] table");
                    };
                    if e.base_url.is_empty() || e.model.is_empty() {
                        bail!("[backend.{name}] needs base_url and model");
                    }
                }
            }
            _ => {
                if b.base.is_some() || b.instruct.is_some() {
                    bail!("[backend] endpoint tables are only used with kind = \"http\"");
                }
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        ctxd_core::jsonl::config_hash(self)
    }
}

/// Picks the flag value, then the config value, or fails naming both.
pub fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    match flag.or_else(|| configured.clone()) {
        Some(p) => Ok(p),
        None => bail!("no {what} path: pass --{} or set paths.{} in the config", what.replace('_', "-"), what),
    }
}
