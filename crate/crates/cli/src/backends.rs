use anyhow::{Context, Result};
use ctxd_core::backend::{ChatCompletionsBackend, GenerationBackend, HeuristicBackend, Role};
use ctxd_core::micro::MicroBackend;
use ctxd_core::retail::scripted::RetailBackend;
use ctxd_core::synth::Backends;

use crate::config::{BackendKind, RunConfig};

fn one(cfg: &RunConfig, role: Role) -> Result<Box<dyn GenerationBackend>> {
    Ok(match cfg.backend.kind {
        BackendKind::ScriptedHeuristic => Box::new(HeuristicBackend::new(role)),
        BackendKind::ScriptedRetail => Box::new(RetailBackend::new(role)),
        BackendKind::ScriptedMicro => Box::new(MicroBackend::new(role)),
        BackendKind::Http => {
            let endpoint = match role {
                Role::BaseCompletion => &cfg.backend.base,
                Role::Instruct => &cfg.backend.instruct,
            };
            let endpoint = endpoint.clone().context("endpoint checked during validation")?;
            Box::new(
                ChatCompletionsBackend::new(role, endpoint)
                    .with_context(|| format!("setting up the {} endpoint", role.as_str()))?,
            )
        }
    })
}

/// Builds both backends, behind the reply cache when one is configured.
pub fn build(cfg: &RunConfig) -> Result<Backends> {
    let backends = Backends {
        base: one(cfg, Role::BaseCompletion)?,
        instruct: one(cfg, Role::Instruct)?,
    };
    match &cfg.pipeline.cache_dir {
        Some(dir) => backends
            .cached(dir)
            .with_context(|| format!("opening cache {}", dir.display())),
        None => Ok(backends),
    }
}
