//! Scripted sessions: a fixed sequence of actions replayed against the
//! configured services. Used by `mbc run` and the replay tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Action, CreateParams, Session, SessionError, SessionStorage};
use crate::config::Config;
use crate::feedback::{AlgorithmKind, Services};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub kind: AlgorithmKind,
    pub w1: String,
    pub w2: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
    #[serde(default)]
    pub steps: Vec<Action>,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read script: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("step {index} ({action}) is not allowed for {kind} sessions")]
    Invalid {
        index: usize,
        action: String,
        kind: AlgorithmKind,
    },
    #[error("session could not be created: {0}")]
    Create(#[source] SessionError),
    #[error("step {index} ({action}) failed: {source}")]
    Step {
        index: usize,
        action: String,
        #[source]
        source: SessionError,
    },
}

impl SessionScript {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ScriptError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Check every step against the capability matrix before anything runs.
    pub fn validate(&self) -> Result<(), ScriptError> {
        let caps = self.kind.capabilities();
        match self.steps.iter().position(|s| !s.allowed(&caps)) {
            Some(index) => Err(ScriptError::Invalid {
                index,
                action: self.steps[index].name().to_string(),
                kind: self.kind,
            }),
            None => Ok(()),
        }
    }

    pub fn session_id(&self) -> String {
        self.session_id.clone().unwrap_or_else(|| {
            format!("script-{}-{}-{}-{}", self.kind, self.w1, self.w2, self.seed)
        })
    }
}

/// Create the session and apply every step in order, stopping at the first
/// failure.
pub fn run_script(
    services: &Services,
    script: &SessionScript,
    storage: Box<dyn SessionStorage>,
) -> Result<Session, ScriptError> {
    script.validate()?;
    let params = CreateParams {
        kind: script.kind,
        w1: script.w1.clone(),
        w2: script.w2.clone(),
        seed: Some(script.seed),
        config: script.config.clone(),
    };
    let mut session = Session::create(services, script.session_id(), params, storage)
        .map_err(ScriptError::Create)?;
    for (index, step) in script.steps.iter().enumerate() {
        session
            .apply(services, step.clone())
            .map_err(|source| ScriptError::Step {
                index,
                action: step.name().to_string(),
                source,
            })?;
    }
    Ok(session)
}
