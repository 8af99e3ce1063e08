//! Completion backends and the prompt-template engine.
//!
//! Every model touchpoint in the pipeline goes through [`CompletionBackend`]
//! with a request rendered from one of the stage templates. Rendering always
//! leaves the answer constraint as the last line of the user text.

mod http;
mod scripted;
pub mod template;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use scripted::{load_fixture, FixtureEntry, FixtureMatch, ScriptedBackend, ScriptedFixture};
pub use template::{AnswerConstraint, PromptTemplate, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Classify,
    Decide,
    Compile,
    Summarize,
    Repair,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Classify,
        Stage::Decide,
        Stage::Compile,
        Stage::Summarize,
        Stage::Repair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Classify => "classify",
            Stage::Decide => "decide",
            Stage::Compile => "compile",
            Stage::Summarize => "summarize",
            Stage::Repair => "repair",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub stage: Stage,
    pub system_text: String,
    pub user_text: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl CompletionRequest {
    /// The last non-blank line of the user text, i.e. the output instruction.
    pub fn final_instruction(&self) -> Option<&str> {
        self.user_text.lines().rev().find(|l| !l.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("no fixture entry matches {stage} request")]
    NoFixtureMatch { stage: Stage, user_text: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {status}")]
    Server { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed server response: {0}")]
    Protocol(String),
}

/// A model that turns a rendered prompt into text. Implementations must be
/// callable from the pipeline thread and may be shared across conversations.
pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Scripted(String),
    Http(String),
}

#[derive(Debug, Error)]
#[error("invalid backend spec `{0}`: expected scripted:PATH or http:URL")]
pub struct BackendSpecError(pub String);

impl std::str::FromStr for BackendSpec {
    type Err = BackendSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("scripted", path)) if !path.is_empty() => Ok(BackendSpec::Scripted(path.into())),
            Some(("http", rest)) if !rest.is_empty() => {
                // Accept both http:localhost:8080 and http:http://localhost:8080.
                let url = if rest.starts_with("http://") || rest.starts_with("https://") {
                    rest.to_string()
                } else if let Some(stripped) = rest.strip_prefix("//") {
                    format!("http://{stripped}")
                } else {
                    format!("http://{rest}")
                };
                Ok(BackendSpec::Http(url))
            }
            _ => Err(BackendSpecError(s.to_string())),
        }
    }
}
