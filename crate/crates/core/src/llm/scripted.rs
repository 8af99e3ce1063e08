use std::sync::Mutex;

use serde::Deserialize;

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse, Stage};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureMatch {
    pub stage: Stage,
    pub contains: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureEntry {
    pub matcher: FixtureMatch,
    pub response: String,
}

/// Ordered replay script for the scripted backend.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScriptedFixture {
    pub entries: Vec<FixtureEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureDoc {
    entries: Vec<EntryDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    stage: Stage,
    contains: String,
    response: String,
}

/// Parses `{"entries":[{"stage","contains","response"}]}`.
pub fn load_fixture(document: &str) -> Result<ScriptedFixture, serde_json::Error> {
    let doc: FixtureDoc = serde_json::from_str(document)?;
    Ok(ScriptedFixture {
        entries: doc
            .entries
            .into_iter()
            .map(|e| FixtureEntry {
                matcher: FixtureMatch {
                    stage: e.stage,
                    contains: e.contains,
                },
                response: e.response,
            })
            .collect(),
    })
}

/// Deterministic backend: each request consumes the first unconsumed entry
/// whose stage matches and whose `contains` occurs in the user text.
#[derive(Debug)]
pub struct ScriptedBackend {
    fixture: ScriptedFixture,
    consumed: Mutex<Vec<bool>>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptedFixture) -> Self {
        let consumed = Mutex::new(vec![false; fixture.entries.len()]);
        Self { fixture, consumed }
    }

    pub fn remaining(&self) -> usize {
        self.consumed
            .lock()
            .expect("fixture lock")
            .iter()
            .filter(|c| !**c)
            .count()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let mut consumed = self.consumed.lock().expect("fixture lock");
        let hit = self.fixture.entries.iter().enumerate().find(|(i, e)| {
            !consumed[*i]
                && e.matcher.stage == request.stage
                && request.user_text.contains(&e.matcher.contains)
        });
        match hit {
            Some((i, entry)) => {
                consumed[i] = true;
                Ok(CompletionResponse {
                    text: entry.response.clone(),
                    backend_id: "scripted".into(),
                    latency_ms: 0,
                })
            }
            None => {
                tracing::warn!(stage = %request.stage, user_text = %request.user_text, "no fixture entry matches");
                Err(BackendError::NoFixtureMatch {
                    stage: request.stage,
                    user_text: request.user_text.clone(),
                })
            }
        }
    }
}
