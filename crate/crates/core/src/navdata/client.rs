//! Clients for the external models that describe, refine and judge.
//!
//! Real backends are reached through [`CommandClient`], which pipes a JSON
//! request into a configured program. [`CachedClient`], [`Retrying`] and
//! [`Bounded`] wrap any client with a prompt-hash cache, backoff retries
//! and an in-flight limit.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{parse_verdict, render_verdict, JudgeFailure, JudgeVerdict, StepKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    DescribeFunction,
    RefineFunction,
    JudgeStep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub capability: Capability,
    #[serde(default)]
    pub system: Option<String>,
    pub prompt: String,
    /// Screenshot references, in the order the prompt mentions them.
    #[serde(default)]
    pub images: Vec<String>,
    /// Caller-side key such as a step key or `snapshot#node`. Not part of
    /// the cache key.
    #[serde(default)]
    pub tag: String,
    /// Extra instructions for the backend, e.g. the annotation box color.
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl GenerationRequest {
    pub fn new(capability: Capability, prompt: impl Into<String>) -> Self {
        Self {
            capability,
            system: None,
            prompt: prompt.into(),
            images: Vec::new(),
            tag: String::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Hex SHA-256 over everything the backend sees.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        let cap = serde_json::to_string(&self.capability).unwrap_or_default();
        for part in [cap.as_str(), self.system.as_deref().unwrap_or(""), self.prompt.as_str()] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        for img in &self.images {
            h.update((img.len() as u64).to_le_bytes());
            h.update(img.as_bytes());
        }
        for (k, v) in &self.metadata {
            h.update(format!("{}:{k}={v}", k.len()).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("backend failed: {0}")]
    Backend(String),
    #[error("no backend configured for {0:?}")]
    Unconfigured(Capability),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait GenerationClient: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError>;
}

impl<C: GenerationClient + ?Sized> GenerationClient for &C {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        (**self).generate(req)
    }
}

impl<C: GenerationClient + ?Sized> GenerationClient for Box<C> {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        (**self).generate(req)
    }
}

type Responder = dyn Fn(&GenerationRequest) -> Result<String, ClientError> + Send + Sync;

/// Answers with a closure; for tests and dry runs.
pub struct MockClient {
    respond: Box<Responder>,
}

impl MockClient {
    pub fn new(f: impl Fn(&GenerationRequest) -> Result<String, ClientError> + Send + Sync + 'static) -> Self {
        Self { respond: Box::new(f) }
    }

    /// Always returns `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| Ok(text.clone()))
    }
}

impl GenerationClient for MockClient {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        (self.respond)(req)
    }
}

/// Metadata key telling a judge which step kind it is looking at.
pub const STEP_KIND_KEY: &str = "step_kind";

/// Rule-based judge: verdicts keyed by request tag, raw responses for
/// malformed-output tests, and an accepting default otherwise.
#[derive(Debug, Clone, Default)]
pub struct MockJudge {
    pub verdicts: BTreeMap<String, JudgeVerdict>,
    pub raw: BTreeMap<String, String>,
}

impl MockJudge {
    pub fn default_verdict(tag: &str, kind: StepKind) -> JudgeVerdict {
        match kind {
            StepKind::Middle => JudgeVerdict {
                summary: format!("Screen for {tag}."),
                step_function: Some(format!("to carry out step {tag}")),
                rationality_reason: Some("The action advances the task.".into()),
                rational: Some(true),
                completion_reason: Some("More steps remain.".into()),
                complete: Some(false),
            },
            StepKind::Final => JudgeVerdict {
                summary: format!("Final screen for {tag}."),
                step_function: None,
                rationality_reason: None,
                rational: None,
                completion_reason: Some("The task goal is visible on screen.".into()),
                complete: Some(true),
            },
        }
    }
}

impl GenerationClient for MockJudge {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        if let Some(raw) = self.raw.get(&req.tag) {
            return Ok(raw.clone());
        }
        let kind = match req.metadata.get(STEP_KIND_KEY).map(String::as_str) {
            Some("final") => StepKind::Final,
            _ => StepKind::Middle,
        };
        let v = self
            .verdicts
            .get(&req.tag)
            .cloned()
            .unwrap_or_else(|| Self::default_verdict(&req.tag, kind));
        Ok(render_verdict(&v, kind))
    }
}

/// Runs an external program per request: the request goes to its stdin as
/// JSON and its stdout is the response.
#[derive(Debug, Clone)]
pub struct CommandClient {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandClient {
    /// Splits a command line on whitespace.
    pub fn from_command_line(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace().map(str::to_string);
        Some(Self {
            program: parts.next()?,
            args: parts.collect(),
        })
    }
}

impl GenerationClient for CommandClient {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let body = serde_json::to_vec(req).map_err(|e| ClientError::Backend(e.to_string()))?;
        child.stdin.take().expect("piped stdin").write_all(&body)?;
        let out = child.wait_with_output()?;
        if !out.status.success() {
            return Err(ClientError::Backend(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        String::from_utf8(out.stdout).map_err(|e| ClientError::Backend(e.to_string()))
    }
}

/// Content-addressed response cache on disk. Responses are written to a
/// temporary file and renamed into place, so concurrent writers of the
/// same key leave one complete file.
pub struct CachedClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: GenerationClient> CachedClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.txt"))
    }
}

impl<C: GenerationClient> GenerationClient for CachedClient<C> {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        let key = req.cache_key();
        let path = self.path(&key);
        if let Ok(hit) = std::fs::read_to_string(&path) {
            return Ok(hit);
        }
        let response = self.inner.generate(req)?;
        let tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        std::fs::write(tmp.path(), &response)?;
        tmp.persist(&path).map_err(|e| ClientError::Io(e.error))?;
        Ok(response)
    }
}

/// Retries failed calls with exponential backoff.
pub struct Retrying<C> {
    inner: C,
    attempts: u32,
    base_delay: Duration,
}

impl<C> Retrying<C> {
    pub fn new(inner: C, attempts: u32, base_delay: Duration) -> Self {
        Self {
            inner,
            attempts: attempts.max(1),
            base_delay,
        }
    }
}

impl<C: GenerationClient> GenerationClient for Retrying<C> {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        let mut delay = self.base_delay;
        let mut last = None;
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
            match self.inner.generate(req) {
                Ok(r) => return Ok(r),
                Err(ClientError::Unconfigured(c)) => return Err(ClientError::Unconfigured(c)),
                Err(e) => {
                    log::warn!(
                        "{:?} request {} failed (attempt {}): {e}",
                        req.capability,
                        req.tag,
                        attempt + 1
                    );
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Caps the number of calls in flight.
pub struct Bounded<C> {
    inner: C,
    free: Mutex<usize>,
    cv: Condvar,
}

impl<C> Bounded<C> {
    pub fn new(inner: C, limit: usize) -> Self {
        Self {
            inner,
            free: Mutex::new(limit.max(1)),
            cv: Condvar::new(),
        }
    }
}

impl<C: GenerationClient> GenerationClient for Bounded<C> {
    fn generate(&self, req: &GenerationRequest) -> Result<String, ClientError> {
        {
            let mut free = self
                .cv
                .wait_while(self.free.lock().expect("poisoned"), |n| *n == 0)
                .expect("poisoned");
            *free -= 1;
        }
        let result = self.inner.generate(req);
        *self.free.lock().expect("poisoned") += 1;
        self.cv.notify_one();
        result
    }
}

/// Stand-in for a capability with no backend configured.
pub struct Unconfigured(pub Capability);

impl GenerationClient for Unconfigured {
    fn generate(&self, _: &GenerationRequest) -> Result<String, ClientError> {
        Err(ClientError::Unconfigured(self.0))
    }
}

/// Builds the judge request for a step.
pub fn judge_request(step: &super::TrajectoryStep) -> Result<GenerationRequest, super::NavError> {
    let kind = StepKind::of(step);
    let prompt = match kind {
        StepKind::Middle => super::build_middle_prompt(step)?,
        StepKind::Final => super::build_final_prompt(step)?,
    };
    let mut req = GenerationRequest::new(Capability::JudgeStep, prompt);
    req.system = Some(super::JUDGE_SYSTEM_PROMPT.to_string());
    req.images.push(step.screenshot_ref.clone());
    if let Some(next) = &step.next_screenshot_ref {
        req.images.push(next.clone());
    }
    req.tag = step.key();
    req.metadata.insert(
        STEP_KIND_KEY.into(),
        match kind {
            StepKind::Middle => "middle".into(),
            StepKind::Final => "final".into(),
        },
    );
    Ok(req)
}

/// Judges one step: builds the prompt, calls the client, parses the answer.
pub fn judge_step(step: &super::TrajectoryStep, client: &dyn GenerationClient) -> Result<JudgeVerdict, JudgeFailure> {
    let req = judge_request(step).map_err(|e| JudgeFailure {
        code: "bad_step".into(),
        message: e.to_string(),
    })?;
    let response = client.generate(&req).map_err(|e| JudgeFailure {
        code: "client_failure".into(),
        message: e.to_string(),
    })?;
    Ok(parse_verdict(&response, StepKind::of(step))?)
}
