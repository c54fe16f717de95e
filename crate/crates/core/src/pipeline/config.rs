use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::geometry::{DEFAULT_BLOCK, DEFAULT_MAX_BLOCKS};
use crate::samplegen::DEFAULT_TOKEN_BUDGET;
use crate::snapshot::DEFAULT_GRID_STEP;

/// Settings shared by all stages. Loaded from a TOML file; every key can
/// be overridden by the command-line flag of the same name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Snapshot directory, trajectory file or sample file, per stage.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub grid_step: u32,
    pub max_blocks: u32,
    pub block_w: u32,
    pub block_h: u32,
    pub token_budget: usize,
    /// Keep only snapshots in this language.
    pub language: Option<String>,
    pub prompts_dir: Option<PathBuf>,
    pub action_space: String,
    pub action_spaces_file: Option<PathBuf>,
    pub seed: u64,
    pub workers: usize,
    /// Use the built-in deterministic clients instead of external backends.
    pub mock_clients: bool,
    pub describe_command: Option<String>,
    pub refine_command: Option<String>,
    pub judge_command: Option<String>,
    pub cache_dir: Option<PathBuf>,
    /// Client calls in flight at once.
    pub concurrency: usize,
    pub retries: u32,
    pub gold: Option<PathBuf>,
    pub pred: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            grid_step: DEFAULT_GRID_STEP,
            max_blocks: DEFAULT_MAX_BLOCKS,
            block_w: DEFAULT_BLOCK,
            block_h: DEFAULT_BLOCK,
            token_budget: DEFAULT_TOKEN_BUDGET,
            language: None,
            prompts_dir: None,
            action_space: "mobile".into(),
            action_spaces_file: None,
            seed: 0,
            workers: 4,
            mock_clients: false,
            describe_command: None,
            refine_command: None,
            judge_command: None,
            cache_dir: None,
            concurrency: 4,
            retries: 3,
            gold: None,
            pred: None,
        }
    }
}

/// Command-line flags; each mirrors a config key.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigOverrides {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub grid_step: Option<u32>,
    #[arg(long)]
    pub max_blocks: Option<u32>,
    #[arg(long)]
    pub block_w: Option<u32>,
    #[arg(long)]
    pub block_h: Option<u32>,
    #[arg(long)]
    pub token_budget: Option<usize>,
    #[arg(long)]
    pub language: Option<String>,
    #[arg(long)]
    pub prompts_dir: Option<PathBuf>,
    #[arg(long)]
    pub action_space: Option<String>,
    #[arg(long)]
    pub action_spaces_file: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub mock_clients: bool,
    #[arg(long)]
    pub describe_command: Option<String>,
    #[arg(long)]
    pub refine_command: Option<String>,
    #[arg(long)]
    pub judge_command: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub pred: Option<PathBuf>,
}

macro_rules! overlay {
    ($cfg:ident, $o:ident; $($field:ident),*; $($opt:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
        $(if $o.$opt.is_some() { $cfg.$opt = $o.$opt.clone(); })*
    };
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// Config file (if any) with flags applied on top, validated.
    pub fn resolve(o: &ConfigOverrides) -> Result<Self, PipelineError> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        overlay!(cfg, o;
            grid_step, max_blocks, block_w, block_h, token_budget, action_space, seed, workers, concurrency, retries;
            input, output, language, prompts_dir, action_spaces_file, describe_command, refine_command,
            judge_command, cache_dir, gold, pred);
        cfg.mock_clients |= o.mock_clients;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = [
            ("grid_step", self.grid_step as usize),
            ("max_blocks", self.max_blocks as usize),
            ("block_w", self.block_w as usize),
            ("block_h", self.block_h as usize),
            ("token_budget", self.token_budget),
            ("workers", self.workers),
            ("concurrency", self.concurrency),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn require_input(&self) -> Result<&Path, PipelineError> {
        self.input
            .as_deref()
            .ok_or_else(|| PipelineError::Config("no input given (--input)".into()))
    }

    pub fn require_output(&self) -> Result<&Path, PipelineError> {
        self.output
            .as_deref()
            .ok_or_else(|| PipelineError::Config("no output directory given (--output)".into()))
    }
}
