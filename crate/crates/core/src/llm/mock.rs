//! Deterministic backends for tests and offline runs.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{BackendCall, BackendError, BackendReply, CompletionBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureMode {
    /// A missing fixture is an error.
    Strict,
    /// A missing fixture yields an empty completion.
    Lenient,
}

/// Replays completions from `<digest>.txt` files in a directory.
///
/// The file body is the completion text; a single trailing newline is
/// dropped so fixtures can be edited with ordinary tools.
#[derive(Debug)]
pub struct FixtureBackend {
    dir: Option<PathBuf>,
    memory: BTreeMap<String, String>,
    mode: FixtureMode,
    missing: Mutex<Vec<MissingFixture>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingFixture {
    pub digest: String,
    pub template_id: String,
    pub prompt: String,
}

impl FixtureBackend {
    pub fn from_dir(dir: impl Into<PathBuf>, mode: FixtureMode) -> Self {
        FixtureBackend {
            dir: Some(dir.into()),
            memory: BTreeMap::new(),
            mode,
            missing: Mutex::new(Vec::new()),
        }
    }

    pub fn from_map(fixtures: BTreeMap<String, String>, mode: FixtureMode) -> Self {
        FixtureBackend {
            dir: None,
            memory: fixtures,
            mode,
            missing: Mutex::new(Vec::new()),
        }
    }

    pub fn fixture_path(dir: &Path, digest: &str) -> PathBuf {
        dir.join(format!("{digest}.txt"))
    }

    /// Prompts that had no fixture, in call order.
    pub fn missing(&self) -> Vec<MissingFixture> {
        self.missing.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn lookup(&self, digest: &str) -> Option<String> {
        if let Some(text) = self.memory.get(digest) {
            return Some(text.clone());
        }
        let dir = self.dir.as_ref()?;
        let body = fs::read_to_string(Self::fixture_path(dir, digest)).ok()?;
        Some(body.strip_suffix('\n').unwrap_or(&body).to_string())
    }
}

impl CompletionBackend for FixtureBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, call: BackendCall<'_>) -> Result<BackendReply, BackendError> {
        if let Some(text) = self.lookup(call.digest) {
            return Ok(BackendReply::text(text));
        }
        self.missing
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(MissingFixture {
                digest: call.digest.to_string(),
                template_id: call.template_id.to_string(),
                prompt: call.prompt.to_string(),
            });
        match self.mode {
            FixtureMode::Strict => Err(BackendError::FixtureMissing {
                digest: call.digest.to_string(),
            }),
            FixtureMode::Lenient => Ok(BackendReply::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedReply {
    Text(String),
    Fail(BackendError),
}

type Responder = Box<dyn Fn(&BackendCall<'_>) -> String + Send + Sync>;

/// Backend that plays a fixed script, then falls back to a responder.
pub struct ScriptedBackend {
    script: Mutex<VecDeque<ScriptedReply>>,
    responder: Option<Responder>,
}

impl std::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedBackend").finish_non_exhaustive()
    }
}

impl ScriptedBackend {
    pub fn new(script: Vec<ScriptedReply>) -> Self {
        ScriptedBackend {
            script: Mutex::new(script.into()),
            responder: None,
        }
    }

    /// Answers every call with `echo:<template_id>`.
    pub fn echo() -> Self {
        Self::responder(|call| format!("echo:{}", call.template_id))
    }

    pub fn responder(f: impl Fn(&BackendCall<'_>) -> String + Send + Sync + 'static) -> Self {
        ScriptedBackend {
            script: Mutex::new(VecDeque::new()),
            responder: Some(Box::new(f)),
        }
    }

    pub fn then(self, f: impl Fn(&BackendCall<'_>) -> String + Send + Sync + 'static) -> Self {
        ScriptedBackend {
            script: self.script,
            responder: Some(Box::new(f)),
        }
    }
}

impl CompletionBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, call: BackendCall<'_>) -> Result<BackendReply, BackendError> {
        let next = self
            .script
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pop_front();
        match next {
            Some(ScriptedReply::Text(t)) => Ok(BackendReply::text(t)),
            Some(ScriptedReply::Fail(e)) => Err(e),
            None => match &self.responder {
                Some(f) => Ok(BackendReply::text(f(&call))),
                None => Err(BackendError::Rejected("script exhausted".into())),
            },
        }
    }
}
