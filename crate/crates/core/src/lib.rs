//! Data construction and evaluation tooling for vision-based GUI agents.
//!
//! * [`geometry`]: block-local coordinates for dynamic-resolution tiling.
//! * [`snapshot`]: captured pages, element marking and DOM pruning.
//! * [`samplegen`]: grounding samples (text2bbox, bbox2text, bbox2dom,
//!   function2bbox) and token-budget packing.
//! * [`actions`]: action-code grammar and action spaces.
//! * [`navdata`]: judge prompts, verdict parsing, step filtering and
//!   chain-of-thought navigation samples.
//! * [`metrics`]: step-level navigation metrics.
//! * [`pipeline`]: the stage commands behind the `guikit` binary.

pub mod actions;
pub mod geometry;
pub mod metrics;
pub mod navdata;
pub mod pipeline;
pub mod samplegen;
pub mod snapshot;

use serde::{Deserialize, Serialize};

/// A non-fatal event worth reporting: a dropped pair, a skipped record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.code, self.message)
    }
}
