use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use harmony_core::llm::{load_fixture, BackendSpec, CompletionBackend, HttpBackend, ScriptedBackend, ScriptedFixture};

use crate::PipelineArgs;

/// Builds fresh backends on demand. Scripted backends start from the full
/// fixture each time; an HTTP backend is shared.
pub enum BackendFactory {
    Scripted(ScriptedFixture),
    Http(Arc<HttpBackend>),
}

impl BackendFactory {
    pub fn from_args(args: &PipelineArgs) -> anyhow::Result<Self> {
        match &args.backend {
            BackendSpec::Scripted(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading fixture {path}"))?;
                let fixture = load_fixture(&text).with_context(|| format!("parsing fixture {path}"))?;
                Ok(BackendFactory::Scripted(fixture))
            }
            BackendSpec::Http(url) => {
                let b = HttpBackend::new(url, &args.model, Duration::from_secs(args.timeout_secs))?;
                Ok(BackendFactory::Http(Arc::new(b)))
            }
        }
    }

    pub fn build(&self) -> Box<dyn CompletionBackend> {
        match self {
            BackendFactory::Scripted(f) => Box::new(ScriptedBackend::new(f.clone())),
            BackendFactory::Http(b) => Box::new(b.clone()),
        }
    }
}
