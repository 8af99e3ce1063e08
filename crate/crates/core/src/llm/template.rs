//! Stage-scoped prompt templates.
//!
//! Each template narrows what the model may answer and restates that
//! constraint as the final line of the prompt. The two reasoning stages
//! (classify, decide) make the model write an `Interpretation:` before its
//! `Action:`.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{CompletionRequest, Stage};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unbound placeholder `{0}`")]
    UnboundPlaceholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerConstraint {
    /// The answer must be one of these tokens.
    OneOf(Vec<String>),
    /// The answer must match a named schema; `instruction` is the line shown.
    Schema {
        schema_ref: String,
        instruction: String,
    },
}

impl AnswerConstraint {
    pub fn instruction_line(&self) -> String {
        match self {
            AnswerConstraint::OneOf(tokens) => {
                format!("Answer with exactly one of: {}.", tokens.join(", "))
            }
            AnswerConstraint::Schema { instruction, .. } => instruction.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: String,
    pub stage: Stage,
    pub system_text: String,
    pub body: String,
    pub answer_constraint: AnswerConstraint,
    pub max_tokens: u32,
}

const SYSTEM_TEXT: &str = "You are Harmony, a home assistant running entirely on the user's own hardware. \
You may only refer to rooms, devices and sensors that appear in the inventory you are given.";

impl PromptTemplate {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for seg in segments(&self.body) {
            if let Segment::Placeholder(name) = seg {
                if seen.insert(name) {
                    out.push(name.to_string());
                }
            }
        }
        out
    }

    /// Substitutes every `{name}` placeholder in one pass and appends the
    /// answer constraint as the final line. Bound values are not rescanned.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<CompletionRequest, TemplateError> {
        let mut text = String::with_capacity(self.body.len() + 256);
        for seg in segments(&self.body) {
            match seg {
                Segment::Literal(s) => text.push_str(s),
                Segment::Placeholder(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::UnboundPlaceholder(name.to_string()))?;
                    text.push_str(value);
                }
            }
        }
        let trimmed = text.trim_end().len();
        text.truncate(trimmed);
        text.push_str("\n\n");
        text.push_str(&self.answer_constraint.instruction_line());
        Ok(CompletionRequest {
            stage: self.stage,
            system_text: self.system_text.clone(),
            user_text: text,
            max_tokens: self.max_tokens,
            temperature: 0.0,
        })
    }

    /// Repair-stage template that re-asks for the same answer shape as `self`.
    pub fn repair_for(&self) -> PromptTemplate {
        PromptTemplate {
            id: format!("repair/{}", self.id),
            stage: Stage::Repair,
            system_text: self.system_text.clone(),
            body: "{original}\n\nYour previous answer was:\n{previous}\n\n\
                   It could not be used because {defect}\n\
                   Answer the same question again and follow the required format exactly."
                .into(),
            answer_constraint: self.answer_constraint.clone(),
            max_tokens: self.max_tokens,
        }
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Splits a body into literal text and `{ident}` placeholders. Braces that do
/// not enclose an identifier (JSON examples, for instance) stay literal.
fn segments(body: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut lit_start = 0;
    let mut i = 0;
    let bytes = body.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'{' {
            if let Some(len) = body[i + 1..].find('}') {
                let name = &body[i + 1..i + 1 + len];
                if is_ident(name) {
                    if lit_start < i {
                        out.push(Segment::Literal(&body[lit_start..i]));
                    }
                    out.push(Segment::Placeholder(name));
                    i += len + 2;
                    lit_start = i;
                    continue;
                }
            }
        }
        i += 1;
    }
    if lit_start < body.len() {
        out.push(Segment::Literal(&body[lit_start..]));
    }
    out
}

pub const URGENCY_TOKENS: [&str; 3] = ["IMMEDIATE", "DEFERRED", "IGNORE"];

pub fn classify() -> PromptTemplate {
    PromptTemplate {
        id: "classify".into(),
        stage: Stage::Classify,
        system_text: SYSTEM_TEXT.into(),
        body: "Decide how urgently the assistant has to react to the message below.\n\n\
Home inventory:\n{inventory}\n\
Recent memory:\n{memory}\n\n\
Message:\n{message}\n\n\
Write your answer in this order:\n\
Interpretation: one sentence on what is happening in the home and what the user is probably doing.\n\
Activity: a short name for the user's current activity.\n\
Requires action: yes or no.\n\
Action: the urgency level.\n\
IMMEDIATE means the assistant should act now, DEFERRED means it can act after the current task, \
IGNORE means nothing needs to happen."
            .into(),
        answer_constraint: AnswerConstraint::OneOf(
            URGENCY_TOKENS.iter().map(|s| s.to_string()).collect(),
        ),
        max_tokens: 256,
    }
}

pub fn decide() -> PromptTemplate {
    PromptTemplate {
        id: "decide".into(),
        stage: Stage::Decide,
        system_text: SYSTEM_TEXT.into(),
        body: "Decide what the assistant should do about the situation below.\n\n\
Devices (id, kind, capability=current value (legal values)):\n{inventory}\n\
Recent memory:\n{memory}\n\n\
What the user told us before:\n{preferences}\n\n\
Scenarios: {scenarios}\n\n\
Message:\n{message}\n\
Handler interpretation: {interpretation}\n\n\
First write \"Interpretation:\" and explain in one or two sentences what the user needs.\n\
Then write \"Action:\" followed by exactly one JSON object, one of:\n\
{\"decision\":\"update_memory\",\"note\":\"...\"}\n\
{\"decision\":\"run_scenario\",\"name\":\"...\"}\n\
{\"decision\":\"execute_plan\",\"steps\":[{\"room\":\"...\",\"device\":\"...\",\"capability\":\"...\",\"value\":...,\"rationale\":\"...\"}]}\n\
{\"decision\":\"store_rule\",\"trigger\":{\"sensor\":\"...\",\"op\":\"changed_to\",\"value\":...},\"steps\":[...]}\n\
Use store_rule only when the user asks for something to happen automatically in the future. \
Only use device ids and capabilities from the device list."
            .into(),
        answer_constraint: AnswerConstraint::Schema {
            schema_ref: "agent-decision".into(),
            instruction: "Respond with \"Interpretation:\" and then \"Action:\" followed by one JSON decision object matching the schema."
                .into(),
        },
        max_tokens: 768,
    }
}

pub fn compile() -> PromptTemplate {
    PromptTemplate {
        id: "compile".into(),
        stage: Stage::Compile,
        system_text: SYSTEM_TEXT.into(),
        body: "Turn the task step below into device commands.\n\n\
Task step: {step}\n\
Candidate devices:\n{candidates}\n\n\
Each command has the schema {\"room\": string, \"device\": string, \"action\": string, \"value\": boolean|number|string|null}.\n\
Use only the candidate devices, their own room, and their listed capabilities.\n\
{feedback}"
            .into(),
        answer_constraint: AnswerConstraint::Schema {
            schema_ref: "device-command-list".into(),
            instruction: "Respond with only a JSON array of steps matching the schema.".into(),
        },
        max_tokens: 512,
    }
}

pub fn summarize() -> PromptTemplate {
    PromptTemplate {
        id: "summarize".into(),
        stage: Stage::Summarize,
        system_text: SYSTEM_TEXT.into(),
        body: "Summarize this interaction so it can be recalled in later sessions. \
Mention the user's request, what was done, and any preference the user revealed.\n\n\
Transcript:\n{transcript}"
            .into(),
        answer_constraint: AnswerConstraint::Schema {
            schema_ref: "summary-sentence".into(),
            instruction: "Respond with one plain sentence of at most 60 words.".into(),
        },
        max_tokens: 160,
    }
}

pub fn all() -> Vec<PromptTemplate> {
    let base = vec![classify(), decide(), compile(), summarize()];
    let repairs: Vec<_> = base.iter().map(PromptTemplate::repair_for).collect();
    base.into_iter().chain(repairs).collect()
}
