//! Stage commands behind the `guikit` binary.
//!
//! Every stage reads its inputs, builds all outputs in memory and only then
//! moves them into the output directory, so a failed run leaves nothing
//! behind. Work fans out over snapshots or steps on a bounded thread pool;
//! each unit draws randomness from its own generator seeded from
//! `(seed, stage, unit id)`, which keeps outputs identical for any worker
//! count.

mod config;
mod stages;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ConfigOverrides, PipelineConfig};
pub use stages::{cmd_eval, cmd_gen_level1, cmd_gen_level2, cmd_gen_level3, cmd_pack, cmd_validate, mock_clients};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Inputs that do not match the interchange schemas.
    #[error("{} schema error(s):\n{}", .0.len(), .0.join("\n"))]
    Schema(Vec<String>),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl PipelineError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Schema(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Counters reported on standard error after a stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub stage: String,
    pub counts: BTreeMap<String, usize>,
}

impl Stats {
    pub fn new(stage: &str) -> Self {
        Self {
            stage: stage.into(),
            counts: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, key: impl Into<String>, n: usize) {
        *self.counts.entry(key.into()).or_default() += n;
    }

    pub fn get(&self, key: &str) -> usize {
        self.counts.get(key).copied().unwrap_or(0)
    }
}

impl std::fmt::Display for Stats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:", self.stage)?;
        for (k, v) in &self.counts {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Generator for one unit of work.
pub fn unit_rng(seed: u64, stage: &str, unit: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((stage.len() as u64).to_le_bytes());
    h.update(stage.as_bytes());
    h.update(unit.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// Files a stage will write, committed together at the end.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) {
        let mut buf = Vec::new();
        for item in items {
            serde_json::to_writer(&mut buf, item).expect("output records serialize");
            buf.push(b'\n');
        }
        self.files.push((name.to_string(), buf));
    }

    pub fn text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    /// Writes every file to a temporary sibling, then renames all of them
    /// into place. Files already renamed are removed if a later one fails.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let mut staged = Vec::new();
        for (name, bytes) in self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PipelineError::io(dir, e))?;
            tmp.write_all(&bytes).map_err(|e| PipelineError::io(tmp.path(), e))?;
            staged.push((dir.join(name), tmp));
        }
        let mut done: Vec<PathBuf> = Vec::new();
        for (path, tmp) in staged {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(PipelineError::io(&path, e.error));
            }
            done.push(path);
        }
        Ok(done)
    }
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Failed(format!("thread pool: {e}")))
}
