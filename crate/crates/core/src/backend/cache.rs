//! Write-once, content-addressed reply cache.
//!
//! Keys hash the backend role, the full prompt and the sampling parameters.
//! Each reply is stored in its own file, written to a temporary name and then
//! renamed, so concurrent writers of the same key race harmlessly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{BackendError, Generation, GenerationBackend, GenerationRequest, Role};

#[derive(Serialize)]
struct KeyMaterial<'a> {
    backend: &'a str,
    role: &'a str,
    prompt: &'a str,
    params: &'a super::SamplingParams,
}

/// Key over the backend name (which names the model for HTTP backends),
/// role, prompt and sampling parameters.
pub fn cache_key(backend: &str, role: Role, request: &GenerationRequest) -> String {
    let material = KeyMaterial {
        backend,
        role: role.as_str(),
        prompt: &request.prompt,
        params: &request.params,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<B: GenerationBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            inner,
            dir,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn store(&self, path: &Path, generation: &Generation) -> Result<(), BackendError> {
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent)?;
        let mut tmp = tempfile_in(parent)?;
        tmp.1.write_all(&serde_json::to_vec(generation).expect("generation serializes"))?;
        tmp.1.sync_all()?;
        drop(tmp.1);
        if path.exists() {
            fs::remove_file(&tmp.0)?;
        } else {
            fs::rename(&tmp.0, path)?;
        }
        Ok(())
    }
}

fn tempfile_in(dir: &Path) -> std::io::Result<(PathBuf, fs::File)> {
    static SEQ: AtomicUsize = AtomicUsize::new(0);
    let name = format!(
        ".tmp-{}-{}",
        std::process::id(),
        SEQ.fetch_add(1, Ordering::Relaxed)
    );
    let path = dir.join(name);
    let file = fs::File::create(&path)?;
    Ok((path, file))
}

impl<B: GenerationBackend> GenerationBackend for CachedBackend<B> {
    fn role(&self) -> Role {
        self.inner.role()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<Generation, BackendError> {
        let key = cache_key(&self.inner.name(), self.role(), request);
        let path = self.path_for(&key);
        if let Ok(bytes) = fs::read(&path) {
            match serde_json::from_slice::<Generation>(&bytes) {
                Ok(g) => {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(g);
                }
                Err(e) => log::warn!("ignoring corrupt cache entry {}: {e}", path.display()),
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let generation = self.inner.generate(request)?;
        self.store(&path, &generation)?;
        Ok(generation)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}
