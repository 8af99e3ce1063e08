use serde::{Deserialize, Serialize};

use crate::llm::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse, Stage};

/// One backend call as it appears in the decision log. Latency is left out so
/// that scripted runs log byte-identical records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Collects backend exchanges and warnings produced while one stage runs.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub exchanges: Vec<Exchange>,
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn call(
        &mut self,
        backend: &dyn CompletionBackend,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, BackendError> {
        let outcome = backend.complete(request);
        self.exchanges.push(Exchange {
            stage: request.stage,
            response: outcome.as_ref().ok().map(|r| r.text.clone()),
            error: outcome.as_ref().err().map(|e| e.to_string()),
        });
        outcome
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        tracing::debug!("{message}");
        self.warnings.push(message);
    }

    pub fn take(&mut self) -> Trace {
        std::mem::take(self)
    }

    pub fn calls(&self) -> usize {
        self.exchanges.len()
    }
}
