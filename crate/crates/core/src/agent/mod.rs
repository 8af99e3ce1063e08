//! Second pipeline stage: chooses between remembering, running a scenario,
//! executing a plan and storing a rule; checks plans against the home.

pub mod plan;
pub mod scenario;
pub mod trigger;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::controller::extract_json;
use crate::handler::{InboundMessage, IntentInference};
use crate::home::{HomeState, Sensor, SensorEvent};
use crate::llm::template;
use crate::llm::{BackendError, CompletionBackend, TemplateError};
use crate::memory::{MemoryEntry, MemoryKind, MemoryStore, Rule};
use crate::trace::Trace;

pub use plan::{DeviceRef, DeviceResolution, RoomAssignment, TaskPlan, TaskStep};
pub use scenario::{Scenario, ScenarioRegistry};
pub use trigger::{CompareOp, TriggerPredicate};

pub const SUMMARY_MAX_CHARS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum AgentDecision {
    UpdateMemory { note: String },
    RunScenario { name: String },
    ExecutePlan { plan: TaskPlan },
    StoreRule { trigger: TriggerPredicate, plan: TaskPlan },
}

impl AgentDecision {
    pub fn variant(&self) -> &'static str {
        match self {
            AgentDecision::UpdateMemory { .. } => "update_memory",
            AgentDecision::RunScenario { .. } => "run_scenario",
            AgentDecision::ExecutePlan { .. } => "execute_plan",
            AgentDecision::StoreRule { .. } => "store_rule",
        }
    }
}

/// What the decide stage is asked to emit after `Action:`.
#[derive(Debug, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
enum DecisionWire {
    UpdateMemory {
        note: String,
    },
    RunScenario {
        name: String,
    },
    ExecutePlan {
        steps: Vec<TaskStep>,
    },
    StoreRule {
        trigger: TriggerPredicate,
        steps: Vec<TaskStep>,
    },
}

#[derive(Debug, Error)]
pub enum DecideError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("unparseable decision: {0}")]
    Unparseable(String),
}

/// Parses and checks a decide-stage response. `Err` carries a defect
/// description suitable for a corrective re-prompt.
pub fn parse_decision(
    text: &str,
    home: &HomeState,
    scenarios: &ScenarioRegistry,
) -> Result<AgentDecision, String> {
    let report = extract_json(after_action_label(text));
    let value = report
        .extracted
        .ok_or("it did not contain a JSON decision object after \"Action:\".")?;
    let wire: DecisionWire = serde_json::from_value(value)
        .map_err(|e| format!("the decision object did not match the schema ({e})."))?;
    match wire {
        DecisionWire::UpdateMemory { note } => {
            if note.trim().is_empty() {
                return Err("update_memory needs a non-empty note.".into());
            }
            Ok(AgentDecision::UpdateMemory { note })
        }
        DecisionWire::RunScenario { name } => match scenarios.get(&name) {
            Some(s) => Ok(AgentDecision::RunScenario {
                name: s.name.clone(),
            }),
            None => Err(format!(
                "there is no scenario named \"{name}\"; known scenarios: {}.",
                scenarios.names().join(", ")
            )),
        },
        DecisionWire::ExecutePlan { steps } => {
            if steps.is_empty() {
                return Err("execute_plan needs at least one step.".into());
            }
            Ok(AgentDecision::ExecutePlan {
                plan: TaskPlan {
                    steps,
                    persist_trigger: None,
                },
            })
        }
        DecisionWire::StoreRule { trigger, steps } => {
            if steps.is_empty() {
                return Err("store_rule needs at least one step.".into());
            }
            trigger
                .validate(home)
                .map_err(|e| format!("the trigger is invalid: {e}."))?;
            Ok(AgentDecision::StoreRule {
                trigger: trigger.clone(),
                plan: TaskPlan {
                    steps,
                    persist_trigger: Some(trigger),
                },
            })
        }
    }
}

/// Text after the last line that starts with `Action:`, or all of `text`.
fn after_action_label(text: &str) -> &str {
    let mut offset = 0;
    let mut found = None;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.get(..7).is_some_and(|p| p.eq_ignore_ascii_case("action:")) {
            found = Some(offset + (line.len() - trimmed.len()) + 7);
        }
        offset += line.len();
    }
    found.map(|i| &text[i..]).unwrap_or(text)
}

pub struct DecideContext<'a> {
    pub home: &'a HomeState,
    pub memory: &'a MemoryStore,
    pub scenarios: &'a ScenarioRegistry,
    pub backend: &'a dyn CompletionBackend,
}

/// Chooses what to do about an inference. Scenario names in an utterance are
/// matched before the backend is consulted.
pub fn decide(
    inference: &IntentInference,
    ctx: &DecideContext<'_>,
    trace: &mut Trace,
) -> Result<AgentDecision, DecideError> {
    if !inference.requires_action {
        return Ok(AgentDecision::UpdateMemory {
            note: inference.activity_hypothesis.clone(),
        });
    }
    if let InboundMessage::Utterance { text, .. } = &inference.source_message {
        if let Some(s) = ctx.scenarios.named_in(text) {
            return Ok(AgentDecision::RunScenario {
                name: s.name.clone(),
            });
        }
    }

    let described = inference.source_message.describe(ctx.home);
    let inventory = ctx.home.capability_listing();
    let memory_view = ctx.memory.render_short_term();
    let prefs = ctx.memory.query_long_term(&described, 3);
    let prefs_view = if prefs.is_empty() {
        "(nothing yet)".to_string()
    } else {
        prefs
            .iter()
            .map(|e| format!("- {}", e.text))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let scenario_names = ctx.scenarios.names().join(", ");
    let tpl = template::decide();
    let request = tpl.render(&[
        ("inventory", &inventory),
        ("memory", &memory_view),
        ("preferences", &prefs_view),
        ("scenarios", &scenario_names),
        ("message", &described),
        ("interpretation", &inference.interpretation),
    ])?;
    let first = trace.call(ctx.backend, &request)?;
    let defect = match parse_decision(&first.text, ctx.home, ctx.scenarios) {
        Ok(d) => return Ok(d),
        Err(defect) => defect,
    };

    let repair = tpl.repair_for().render(&[
        ("original", &request.user_text),
        ("previous", &first.text),
        ("defect", &defect),
    ])?;
    let second = trace.call(ctx.backend, &repair)?;
    parse_decision(&second.text, ctx.home, ctx.scenarios).map_err(DecideError::Unparseable)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Violation {
    UnknownDevice { device: String },
    AmbiguousDevice { candidates: Vec<String> },
    UnknownCapability { device: String, capability: String },
    ValueOutOfRange { device: String, capability: String, value: Value },
    UnknownRoom { hint: String },
}

impl Violation {
    /// Ambiguity can still be settled by the controller; everything else is fatal
    /// for the step.
    pub fn is_hard(&self) -> bool {
        !matches!(self, Violation::AmbiguousDevice { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleStep {
    pub index: usize,
    pub device: String,
    pub room: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepViolation {
    pub index: usize,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Feasibility {
    pub feasible: Vec<FeasibleStep>,
    pub violations: Vec<StepViolation>,
}

/// Resolves every step against the home. Violations are data; a step appears
/// in exactly one of the two lists.
pub fn check_feasibility(plan: &TaskPlan, home: &HomeState) -> Feasibility {
    let mut out = Feasibility::default();
    for (index, step) in plan.steps.iter().enumerate() {
        match check_step(step, home) {
            Ok((device, room)) => out.feasible.push(FeasibleStep {
                index,
                device,
                room,
            }),
            Err(violation) => out.violations.push(StepViolation { index, violation }),
        }
    }
    out
}

fn check_step(step: &TaskStep, home: &HomeState) -> Result<(String, String), Violation> {
    let hinted_room = match plan::resolve_room_hint(step, home) {
        Some(Err(hint)) => return Err(Violation::UnknownRoom { hint }),
        Some(Ok(r)) => Some(r),
        None => None,
    };
    let supports = |id: &str| -> Result<(), Violation> {
        let dev = &home.devices[id];
        let spec = dev
            .capabilities
            .get(&step.capability)
            .ok_or_else(|| Violation::UnknownCapability {
                device: id.to_string(),
                capability: step.capability.clone(),
            })?;
        spec.accept(&step.target_value)
            .map(|_| ())
            .ok_or_else(|| Violation::ValueOutOfRange {
                device: id.to_string(),
                capability: step.capability.clone(),
                value: step.target_value.clone(),
            })
    };
    match plan::resolve_device(step, home) {
        DeviceResolution::Unknown => Err(Violation::UnknownDevice {
            device: step.device_ref.to_string(),
        }),
        DeviceResolution::Unique(id) => {
            supports(&id)?;
            let room = hinted_room.unwrap_or_else(|| home.devices[&id].room_id.clone());
            Ok((id, room))
        }
        DeviceResolution::Ambiguous(ids) => {
            let mut first_err = None;
            let fitting: Vec<String> = ids
                .into_iter()
                .filter(|id| match supports(id) {
                    Ok(()) => true,
                    Err(e) => {
                        first_err.get_or_insert(e);
                        false
                    }
                })
                .collect();
            match fitting.len() {
                0 => Err(first_err.expect("at least one candidate was rejected")),
                1 => {
                    let id = fitting.into_iter().next().expect("one candidate");
                    let room = home.devices[&id].room_id.clone();
                    Ok((id, room))
                }
                _ => Err(Violation::AmbiguousDevice {
                    candidates: fitting,
                }),
            }
        }
    }
}

/// Asks the backend for a short summary of a finished interaction and files
/// it in long-term memory. Backend failures skip the summary with a warning.
pub fn summarize_interaction(
    transcript: &[String],
    backend: &dyn CompletionBackend,
    memory: &mut MemoryStore,
    conversation_id: &str,
    trace: &mut Trace,
) -> Option<MemoryEntry> {
    if transcript.is_empty() {
        return None;
    }
    let joined = transcript.join("\n");
    let request = match template::summarize().render(&[("transcript", &joined)]) {
        Ok(r) => r,
        Err(e) => {
            trace.warn(format!("summary skipped: {e}"));
            return None;
        }
    };
    match trace.call(backend, &request) {
        Ok(resp) => {
            let text: String = resp.text.trim().chars().take(SUMMARY_MAX_CHARS).collect();
            if text.is_empty() {
                trace.warn("summary skipped: empty response");
                return None;
            }
            match memory.append_long_term(MemoryKind::Summary, &text, conversation_id) {
                Ok(entry) => Some(entry),
                Err(e) => {
                    trace.warn(format!("summary not persisted: {e}"));
                    None
                }
            }
        }
        Err(e) => {
            trace.warn(format!("summary skipped: {e}"));
            None
        }
    }
}

/// Plans of every enabled rule whose trigger holds for this event, in rule-id
/// order. A rule is only considered when its trigger reads the event's sensor
/// or carries a clock marker.
pub fn match_rules<'a>(
    event: &SensorEvent,
    sensors: &BTreeMap<String, Sensor>,
    rules: impl IntoIterator<Item = &'a Rule>,
) -> Vec<(u64, TaskPlan)> {
    let mut fired: Vec<(u64, TaskPlan)> = rules
        .into_iter()
        .filter(|r| r.enabled)
        .filter(|r| r.trigger.references(&event.sensor_id) || r.trigger.has_clock_marker())
        .filter(|r| r.trigger.evaluate(event, sensors))
        .map(|r| (r.id, r.plan.clone()))
        .collect();
    fired.sort_by_key(|(id, _)| *id);
    fired
}
