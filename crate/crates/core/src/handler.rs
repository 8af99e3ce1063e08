//! First pipeline stage: urgency assessment and intent inference.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::home::{HomeState, SensorEvent};
use crate::llm::template::{self, URGENCY_TOKENS};
use crate::llm::{BackendError, CompletionBackend, TemplateError};
use crate::memory::{MemoryKind, MemoryStore};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InboundMessage {
    Utterance { text: String, clock: u64 },
    SensorEvent { event: SensorEvent },
    Timer { label: String, clock: u64 },
}

impl InboundMessage {
    pub fn utterance(text: impl Into<String>, clock: u64) -> Self {
        InboundMessage::Utterance {
            text: text.into(),
            clock,
        }
    }

    pub fn clock(&self) -> u64 {
        match self {
            InboundMessage::Utterance { clock, .. } | InboundMessage::Timer { clock, .. } => *clock,
            InboundMessage::SensorEvent { event } => event.clock,
        }
    }

    pub fn is_utterance(&self) -> bool {
        matches!(self, InboundMessage::Utterance { .. })
    }

    /// One-line rendering used in prompts and memory.
    pub fn describe(&self, home: &HomeState) -> String {
        match self {
            InboundMessage::Utterance { text, .. } => format!("User said: \"{text}\""),
            InboundMessage::Timer { label, .. } => format!("Timer: {label}"),
            InboundMessage::SensorEvent { event } => {
                let (kind, room, unit) = home
                    .sensors
                    .get(&event.sensor_id)
                    .map(|s| (s.kind.as_str(), s.room_id.as_str(), s.kind.unit()))
                    .unwrap_or(("unknown", "unknown", ""));
                format!(
                    "Event: sensor {} ({kind}, {room}) changed from {}{unit} to {}{unit}",
                    event.sensor_id, event.old_value, event.new_value
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Urgency {
    Immediate,
    Deferred,
    Ignore,
}

impl Urgency {
    pub fn as_str(self) -> &'static str {
        match self {
            Urgency::Immediate => "IMMEDIATE",
            Urgency::Deferred => "DEFERRED",
            Urgency::Ignore => "IGNORE",
        }
    }
}

impl fmt::Display for Urgency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no urgency level found in model output")]
pub struct UnparseableUrgency;

/// Returns the last whole-word occurrence of an urgency token, ignoring case.
pub fn parse_urgency(text: &str) -> Result<Urgency, UnparseableUrgency> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .rev()
        .find_map(|word| {
            let upper = word.to_uppercase();
            match upper.as_str() {
                "IMMEDIATE" => Some(Urgency::Immediate),
                "DEFERRED" => Some(Urgency::Deferred),
                "IGNORE" => Some(Urgency::Ignore),
                _ => None,
            }
        })
        .ok_or(UnparseableUrgency)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentInference {
    pub activity_hypothesis: String,
    pub urgency: Urgency,
    pub requires_action: bool,
    pub interpretation: String,
    pub source_message: InboundMessage,
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

const LABELS: [&str; 5] = [
    "interpretation:",
    "activity:",
    "requires action:",
    "action:",
    "urgency:",
];

/// Text following `label` up to the next known label, trimmed.
pub(crate) fn labeled_section(text: &str, label: &str) -> Option<String> {
    let lower = text.to_ascii_lowercase();
    let start = lower.find(label)? + label.len();
    let rest = &text[start..];
    let rest_lower = &lower[start..];
    let end = LABELS
        .iter()
        .filter_map(|l| rest_lower.find(l))
        .min()
        .unwrap_or(rest.len());
    let s = rest[..end].trim();
    (!s.is_empty()).then(|| s.to_string())
}

/// Classifies one inbound message. The resulting inference is appended to the
/// shared short-term memory before returning; the home is never touched.
pub fn classify(
    msg: &InboundMessage,
    memory: &mut MemoryStore,
    home: &HomeState,
    inventory: &str,
    backend: &dyn CompletionBackend,
    conversation_id: &str,
    trace: &mut Trace,
) -> Result<IntentInference, ClassifyError> {
    let described = msg.describe(home);
    let memory_view = memory.render_short_term();
    let tpl = template::classify();
    let request = tpl.render(&[
        ("inventory", inventory),
        ("memory", &memory_view),
        ("message", &described),
    ])?;
    let first = trace.call(backend, &request)?;

    let (text, urgency) = match parse_urgency(&first.text) {
        Ok(u) => (first.text, u),
        Err(_) => {
            let defect = format!(
                "it did not contain one of {}.",
                URGENCY_TOKENS.join(", ")
            );
            let repair = tpl.repair_for().render(&[
                ("original", &request.user_text),
                ("previous", &first.text),
                ("defect", &defect),
            ])?;
            let second = trace.call(backend, &repair)?;
            match parse_urgency(&second.text) {
                Ok(u) => (second.text, u),
                Err(_) => {
                    trace.warn("urgency unparseable after repair; falling back to DEFERRED");
                    (second.text, Urgency::Deferred)
                }
            }
        }
    };

    let mut urgency = urgency;
    if msg.is_utterance() && urgency == Urgency::Ignore {
        trace.warn("user utterance classified IGNORE; treating as IMMEDIATE");
        urgency = Urgency::Immediate;
    }

    let interpretation = labeled_section(&text, "interpretation:").unwrap_or_else(|| {
        text.lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or("(no interpretation given)")
            .to_string()
    });
    let activity_hypothesis =
        labeled_section(&text, "activity:").unwrap_or_else(|| interpretation.clone());
    let declined = labeled_section(&text, "requires action:")
        .map(|s| s.to_lowercase().starts_with("no"))
        .unwrap_or(false);
    let requires_action = urgency != Urgency::Ignore && !declined;

    memory.append_short_term(
        MemoryKind::Observation,
        &format!("{described} -> {urgency}: {activity_hypothesis}"),
        conversation_id,
    );

    Ok(IntentInference {
        activity_hypothesis,
        urgency,
        requires_action,
        interpretation,
        source_message: msg.clone(),
    })
}
