use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use super::extract::{extract_json, Outcome, Repair};
use super::validate::{check_command, command_shape, validate_commands, Rejection, RejectionReason};
use crate::agent::plan::{resolve_device, resolve_room_hint, DeviceResolution, RoomAssignment};
use crate::agent::{TaskPlan, TaskStep};
use crate::command::DeviceCommand;
use crate::home::HomeState;
use crate::llm::{template, CompletionBackend, CompletionRequest};
use crate::trace::Trace;

/// Total compile-stage attempts per ambiguous step, the first included.
pub const RETRY_BUDGET: usize = 2;

/// One compile-stage answer and what the controller made of it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attempt {
    pub text: String,
    pub outcome: Outcome,
    pub repairs: Vec<Repair>,
    pub accepted: Vec<DeviceCommand>,
    pub rejections: Vec<Rejection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect: Option<String>,
}

impl Attempt {
    pub fn succeeded(&self) -> bool {
        self.defect.is_none()
    }

    /// Every shape-valid command in the answer, accepted or not.
    pub fn proposed(&self) -> Vec<DeviceCommand> {
        let mut out = self.accepted.clone();
        out.extend(self.rejections.iter().filter_map(|r| command_shape(&r.candidate)));
        out
    }

    fn backend_failure(err: String) -> Self {
        Attempt {
            text: String::new(),
            outcome: Outcome::Unrecoverable,
            repairs: Vec::new(),
            accepted: Vec::new(),
            rejections: Vec::new(),
            defect: Some(format!("the backend failed: {err}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("retry budget exhausted after {} attempts", attempts.len())]
pub struct RetryExhausted {
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("could not compile step {step}: {reason}")]
pub struct CompileFailure {
    pub step: usize,
    pub reason: String,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CompiledPlan {
    /// Validated commands in step order.
    pub commands: Vec<DeviceCommand>,
    /// Fast-path candidates that failed validation.
    pub rejections: Vec<Rejection>,
    /// Every command proposed before validation, tagged with its step index.
    pub candidates: Vec<(usize, DeviceCommand)>,
    pub attempts: Vec<Attempt>,
}

/// Gives every step a concrete room: an explicit hint that names a room wins,
/// otherwise the resolved device's room.
pub fn assign_rooms(steps: &[TaskStep], home: &HomeState) -> Vec<RoomAssignment> {
    steps
        .iter()
        .map(|step| match resolve_room_hint(step, home) {
            Some(Ok(room)) => RoomAssignment::Room(room),
            Some(Err(hint)) => RoomAssignment::UnknownRoom(hint),
            None => match resolve_device(step, home) {
                DeviceResolution::Unique(id) => RoomAssignment::Room(home.devices[&id].room_id.clone()),
                _ => RoomAssignment::Unresolved,
            },
        })
        .collect()
}

/// The command a step literally asks for, before any validation. `None` for
/// ambiguous steps, which only the compile stage can turn into commands.
pub fn proposal(step: &TaskStep, home: &HomeState) -> Option<DeviceCommand> {
    let device = match resolve_device(step, home) {
        DeviceResolution::Unique(id) => id,
        DeviceResolution::Ambiguous(_) => return None,
        DeviceResolution::Unknown => step.device_ref.to_string(),
    };
    let room = match assign_rooms(std::slice::from_ref(step), home).remove(0) {
        RoomAssignment::Room(r) => r,
        RoomAssignment::UnknownRoom(h) => h,
        RoomAssignment::Unresolved => String::new(),
    };
    Some(DeviceCommand {
        room,
        device,
        action: step.capability.clone(),
        value: step.target_value.clone(),
    })
}

/// Compiles a (feasibility-checked) plan. Steps naming a device the home can
/// resolve by itself are mapped without any backend call; only ambiguous
/// steps reach the compile-stage prompt.
pub fn compile_plan(
    plan: &TaskPlan,
    home: &HomeState,
    backend: &dyn CompletionBackend,
    trace: &mut Trace,
) -> Result<CompiledPlan, CompileFailure> {
    let mut out = CompiledPlan::default();
    for (index, step) in plan.steps.iter().enumerate() {
        match resolve_device(step, home) {
            DeviceResolution::Ambiguous(ids) => {
                let ids: Vec<String> = ids
                    .into_iter()
                    .filter(|id| home.devices[id].capabilities.contains_key(&step.capability))
                    .collect();
                let result = compile_ambiguous(step, &ids, home, backend, trace);
                let attempts = match &result {
                    Ok(a) | Err(a) => a,
                };
                for a in attempts {
                    out.candidates.extend(a.proposed().into_iter().map(|c| (index, c)));
                }
                match result {
                    Ok(attempts) => {
                        let last = attempts.last().expect("at least one attempt");
                        out.commands.extend(last.accepted.iter().cloned());
                        out.attempts.extend(attempts);
                    }
                    Err(attempts) => {
                        return Err(CompileFailure {
                            step: index,
                            reason: attempts
                                .last()
                                .and_then(|a| a.defect.clone())
                                .unwrap_or_default(),
                            attempts,
                        })
                    }
                }
            }
            _ => {
                let cmd = proposal(step, home).expect("only ambiguous steps lack a proposal");
                out.candidates.push((index, cmd.clone()));
                match check_command(&cmd, home) {
                    Ok(()) => out.commands.push(cmd),
                    Err(reason) => out.rejections.push(Rejection {
                        index,
                        candidate: serde_json::to_value(&cmd).expect("command serializes"),
                        reason,
                    }),
                }
            }
        }
    }
    Ok(out)
}

fn candidate_listing(ids: &[String], home: &HomeState) -> String {
    ids.iter()
        .map(|id| {
            let d = &home.devices[id];
            let caps: Vec<String> = d
                .capabilities
                .values()
                .map(|c| format!("{} ({})", c.name, c.describe_range()))
                .collect();
            format!("- {id} ({}) in room {}: {}", d.kind, d.room_id, caps.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn compile_ambiguous(
    step: &TaskStep,
    ids: &[String],
    home: &HomeState,
    backend: &dyn CompletionBackend,
    trace: &mut Trace,
) -> Result<Vec<Attempt>, Vec<Attempt>> {
    let step_json = serde_json::to_string(step).expect("step serializes");
    let listing = candidate_listing(ids, home);
    let request = template::compile()
        .render(&[("step", &step_json), ("candidates", &listing), ("feedback", "")])
        .expect("compile template bindings are complete");
    let first = match trace.call(backend, &request) {
        Ok(resp) => evaluate_attempt(&resp.text, home, ids),
        Err(e) => Attempt::backend_failure(e.to_string()),
    };
    if first.succeeded() {
        return Ok(vec![first]);
    }
    match retry_with_feedback(&request, first, home, ids, backend, RETRY_BUDGET, trace) {
        Ok(attempts) => Ok(attempts),
        Err(RetryExhausted { attempts }) => Err(attempts),
    }
}

/// Judges one compile-stage answer. An answer succeeds when it parses, every
/// element validates, at least one command results, and all commands target
/// one of `allowed`.
pub fn evaluate_attempt(text: &str, home: &HomeState, allowed: &[String]) -> Attempt {
    let report = extract_json(text);
    let mut attempt = Attempt {
        text: text.to_string(),
        outcome: report.outcome,
        repairs: report.repairs_applied.clone(),
        accepted: Vec::new(),
        rejections: Vec::new(),
        defect: None,
    };
    let Some(value) = report.extracted else {
        attempt.defect = Some("the answer contained no parseable JSON array".into());
        return attempt;
    };
    let v = validate_commands(&value, home);
    attempt.accepted = v.commands;
    attempt.rejections = v.rejections;

    let off_target: Vec<String> = attempt
        .accepted
        .iter()
        .filter(|c| !allowed.contains(&c.device))
        .map(|c| c.device.clone())
        .collect();
    if !attempt.rejections.is_empty() {
        let parts: Vec<String> = attempt
            .rejections
            .iter()
            .map(|r| describe_rejection(r, home))
            .collect();
        attempt.defect = Some(parts.join("; "));
    } else if !off_target.is_empty() {
        attempt.defect = Some(format!(
            "{} not among the candidate devices",
            off_target.join(", ")
        ));
    } else if attempt.accepted.is_empty() {
        attempt.defect = Some("the answer contained no commands".into());
    }
    if attempt.defect.is_some() {
        // A failed answer contributes nothing executable.
        let elements = value.as_array().map(Vec::as_slice).unwrap_or_default();
        let moved: Vec<DeviceCommand> = std::mem::take(&mut attempt.accepted);
        for cmd in moved {
            if !allowed.contains(&cmd.device) {
                let candidate = serde_json::to_value(&cmd).expect("command serializes");
                let index = elements.iter().position(|e| *e == candidate).unwrap_or(0);
                attempt.rejections.push(Rejection {
                    index,
                    candidate,
                    reason: RejectionReason::NotACandidate,
                });
            } else {
                attempt.accepted.push(cmd);
            }
        }
    }
    attempt
}

fn describe_rejection(r: &Rejection, home: &HomeState) -> String {
    let field = |k: &str| r.candidate.get(k).and_then(Value::as_str).unwrap_or("?").to_string();
    match r.reason {
        RejectionReason::HallucinatedDevice => format!("device \"{}\" does not exist", field("device")),
        RejectionReason::WrongRoom => {
            let dev = field("device");
            let actual = home.devices.get(&dev).map(|d| d.room_id.as_str()).unwrap_or("?");
            format!("device \"{dev}\" is in room \"{actual}\", not \"{}\"", field("room"))
        }
        RejectionReason::UnknownAction => {
            format!("device \"{}\" has no capability \"{}\"", field("device"), field("action"))
        }
        RejectionReason::BadValue => format!(
            "value {} is not allowed for {}.{}",
            r.candidate.get("value").unwrap_or(&json!(null)),
            field("device"),
            field("action")
        ),
        RejectionReason::NotACandidate => format!("device \"{}\" is not one of the candidates", field("device")),
        RejectionReason::BadShape => format!(
            "element {} does not have exactly the keys room, device, action, value",
            r.index
        ),
    }
}

/// Inserts `paragraph` just above the request's final instruction line.
fn with_feedback(request: &CompletionRequest, paragraph: &str) -> CompletionRequest {
    let text = request.user_text.trim_end();
    let (head, last) = text.rsplit_once('\n').unwrap_or(("", text));
    let mut out = request.clone();
    out.user_text = format!("{}\n\n{paragraph}\n\n{last}", head.trim_end());
    out
}

/// Re-issues a failed compile request with a corrective paragraph naming the
/// defect and the legal devices, until an attempt succeeds or `budget` total
/// attempts (the failed first one included) have been made.
pub fn retry_with_feedback(
    request: &CompletionRequest,
    first: Attempt,
    home: &HomeState,
    legal: &[String],
    backend: &dyn CompletionBackend,
    budget: usize,
    trace: &mut Trace,
) -> Result<Vec<Attempt>, RetryExhausted> {
    let mut attempts = vec![first];
    while attempts.len() < budget.max(1) {
        let last = attempts.last().expect("non-empty");
        if last.succeeded() {
            break;
        }
        let paragraph = format!(
            "Your previous answer could not be used: {}. The only legal devices are: {}.",
            last.defect.as_deref().unwrap_or("unknown defect"),
            legal.join(", ")
        );
        let retry = with_feedback(request, &paragraph);
        let attempt = match trace.call(backend, &retry) {
            Ok(resp) => evaluate_attempt(&resp.text, home, legal),
            Err(e) => Attempt::backend_failure(e.to_string()),
        };
        attempts.push(attempt);
    }
    if attempts.last().is_some_and(Attempt::succeeded) {
        Ok(attempts)
    } else {
        Err(RetryExhausted { attempts })
    }
}
