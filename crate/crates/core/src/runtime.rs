//! The assistant runtime: owns the home, memory and backend and runs every
//! inbound message through the full pipeline, one message at a time.

use std::collections::{BTreeSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::agent::{
    check_feasibility, decide, match_rules, summarize_interaction, AgentDecision, DecideContext,
    ScenarioRegistry, TaskPlan,
};
use crate::command::DeviceCommand;
use crate::controller::{check_command, compile_plan, proposal};
use crate::events::{EventKind, EventRecord};
use crate::handler::{classify, InboundMessage, IntentInference, Urgency};
use crate::home::{HomeError, HomeState};
use crate::llm::CompletionBackend;
use crate::memory::{MemoryKind, MemoryStore, StorageError};
use crate::trace::{Exchange, Trace};

pub const LOG_DIR: &str = "logs";
pub const LOG_FILE: &str = "interactions.jsonl";

const APOLOGY: &str = "Sorry, I could not work out what to do with that.";

type Observer = Box<dyn FnMut(&EventRecord) + Send>;

/// What one call into the runtime produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Interaction {
    pub conversation_id: String,
    pub reply: String,
    /// Commands that reached the home, in execution order.
    pub commands: Vec<DeviceCommand>,
    /// Every command proposed before validation, including rejected ones.
    pub candidates: Vec<DeviceCommand>,
    pub records: Vec<EventRecord>,
}

#[derive(Default)]
struct Session {
    conversation_id: String,
    replies: Vec<String>,
    commands: Vec<DeviceCommand>,
    candidates: Vec<DeviceCommand>,
    records: Vec<EventRecord>,
    transcript: Vec<String>,
    action_bearing: bool,
}

impl Session {
    fn new(conversation_id: String) -> Self {
        Session {
            conversation_id,
            ..Session::default()
        }
    }

    fn merge(&mut self, other: Session) {
        self.replies.extend(other.replies);
        self.commands.extend(other.commands);
        self.candidates.extend(other.candidates);
        self.records.extend(other.records);
    }

    fn into_interaction(self) -> Interaction {
        Interaction {
            conversation_id: self.conversation_id,
            reply: self.replies.join(" "),
            commands: self.commands,
            candidates: self.candidates,
            records: self.records,
        }
    }
}

pub struct Assistant {
    home: HomeState,
    memory: MemoryStore,
    scenarios: ScenarioRegistry,
    backend: Box<dyn CompletionBackend>,
    event_clock: u64,
    conversations: u64,
    deferred: VecDeque<(String, IntentInference)>,
    log: Option<(PathBuf, File)>,
    observers: Vec<Observer>,
}

impl Assistant {
    /// A runtime that keeps everything in memory.
    pub fn new(
        home: HomeState,
        scenarios: ScenarioRegistry,
        backend: impl CompletionBackend + 'static,
    ) -> Self {
        Assistant {
            home,
            memory: MemoryStore::in_memory(),
            scenarios,
            backend: Box::new(backend),
            event_clock: 0,
            conversations: 0,
            deferred: VecDeque::new(),
            log: None,
            observers: Vec::new(),
        }
    }

    /// A runtime persisting memory, rules and the decision log under `data_dir`.
    /// An existing log is continued: clocks and conversation ids pick up where
    /// it ended.
    pub fn open(
        home: HomeState,
        scenarios: ScenarioRegistry,
        backend: impl CompletionBackend + 'static,
        data_dir: &Path,
    ) -> Result<Self, StorageError> {
        let mut a = Assistant::new(home, scenarios, backend);
        a.memory = MemoryStore::open(data_dir)?;
        let log_dir = data_dir.join(LOG_DIR);
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| StorageError::Io { path, source }
        };
        fs::create_dir_all(&log_dir).map_err(io(&log_dir))?;
        let path = log_dir.join(LOG_FILE);
        if let Ok(f) = File::open(&path) {
            for line in BufReader::new(f).lines().map_while(Result::ok) {
                if let Ok(r) = serde_json::from_str::<EventRecord>(&line) {
                    a.event_clock = a.event_clock.max(r.clock);
                    let n = r.conversation_id.trim_start_matches('c').parse().unwrap_or(0);
                    a.conversations = a.conversations.max(n);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        a.log = Some((path, file));
        Ok(a)
    }

    /// Registers a callback that sees every record before it is logged.
    pub fn subscribe(&mut self, observer: impl FnMut(&EventRecord) + Send + 'static) {
        self.observers.push(Box::new(observer));
    }

    pub fn home(&self) -> &HomeState {
        &self.home
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut MemoryStore {
        &mut self.memory
    }

    pub fn scenarios(&self) -> &ScenarioRegistry {
        &self.scenarios
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn handle_utterance(&mut self, text: &str) -> Interaction {
        let msg = InboundMessage::utterance(text, self.home.logical_clock);
        self.handle_message(msg)
    }

    /// Applies a sensor reading to the home and runs the resulting event.
    pub fn handle_sensor(&mut self, sensor_id: &str, value: &Value) -> Result<Interaction, HomeError> {
        let event = self.home.inject_sensor_event(sensor_id, value)?;
        Ok(self.handle_message(InboundMessage::SensorEvent { event }))
    }

    /// Runs a registered scenario directly. `None` if no such scenario exists.
    pub fn run_scenario(&mut self, name: &str) -> Option<Interaction> {
        let scenario = self.scenarios.get(name)?.clone();
        let mut s = self.start();
        self.emit(
            &mut s,
            EventKind::UtteranceIn,
            json!({"scenario": scenario.name, "clock": self.home.logical_clock}),
        );
        s.transcript.push(format!("User ran scenario \"{}\"", scenario.name));
        let decision = AgentDecision::RunScenario {
            name: scenario.name.clone(),
        };
        self.emit(&mut s, EventKind::Decision, json!({"decision": decision, "exchanges": []}));
        s.action_bearing = true;
        self.execute(&mut s, &scenario.plan);
        self.finish(&mut s);
        Some(s.into_interaction())
    }

    /// Runs one message through the pipeline. Sensor events must already be
    /// reflected in the home (see [`Assistant::handle_sensor`]). Never fails:
    /// stage errors become an apology plus warning records.
    pub fn handle_message(&mut self, msg: InboundMessage) -> Interaction {
        let mut s = self.start();
        match &msg {
            InboundMessage::Utterance { text, clock } => {
                self.emit(&mut s, EventKind::UtteranceIn, json!({"text": text, "clock": clock}))
            }
            InboundMessage::SensorEvent { event } => {
                self.emit(&mut s, EventKind::SensorIn, json!(event))
            }
            InboundMessage::Timer { label, clock } => {
                self.emit(&mut s, EventKind::SensorIn, json!({"timer": label, "clock": clock}))
            }
        }
        s.transcript.push(msg.describe(&self.home));

        // Stored rules act first; the model still classifies the event but
        // cannot act on it a second time.
        let mut rule_fired = false;
        if let InboundMessage::SensorEvent { event } = &msg {
            for (id, plan) in match_rules(event, &self.home.sensors, self.memory.rules()) {
                rule_fired = true;
                s.action_bearing = true;
                self.emit(
                    &mut s,
                    EventKind::Decision,
                    json!({"source": "rule", "rule_id": id, "decision": {"decision": "execute_plan", "plan": plan}}),
                );
                s.transcript.push(format!("Rule {id} fired"));
                self.execute(&mut s, &plan);
            }
        }

        let mut trace = Trace::default();
        let inventory = self.home.snapshot_inventory();
        let result = classify(
            &msg,
            &mut self.memory,
            &self.home,
            &inventory,
            &*self.backend,
            &s.conversation_id,
            &mut trace,
        );
        let exchanges = self.drain(&mut s, &mut trace);
        match result {
            Err(e) => {
                self.emit(&mut s, EventKind::Inference, json!({"error": e.to_string(), "exchanges": exchanges}));
                self.warn(&mut s, format!("classification failed: {e}"));
                if !rule_fired {
                    s.replies.push(APOLOGY.into());
                }
            }
            Ok(inference) => {
                self.emit(&mut s, EventKind::Inference, json!({"inference": inference, "exchanges": exchanges}));
                s.transcript.push(format!("Interpretation: {}", inference.interpretation));
                if rule_fired {
                    // Action path suppressed: the rule already acted.
                } else if inference.urgency == Urgency::Ignore {
                    s.replies.push("Nothing needs doing right now.".into());
                } else if inference.requires_action && inference.urgency == Urgency::Deferred {
                    self.deferred.push_back((s.conversation_id.clone(), inference));
                    s.replies.push("I will take care of that next.".into());
                } else {
                    self.act(&mut s, &inference);
                }
            }
        }
        self.finish(&mut s);

        while let Some((conversation_id, inference)) = self.deferred.pop_front() {
            let mut d = Session::new(conversation_id);
            d.transcript.push(inference.source_message.describe(&self.home));
            d.transcript.push(format!("Interpretation: {}", inference.interpretation));
            self.act(&mut d, &inference);
            self.finish(&mut d);
            s.merge(d);
        }
        s.into_interaction()
    }

    fn start(&mut self) -> Session {
        self.conversations += 1;
        Session::new(format!("c{}", self.conversations))
    }

    fn emit(&mut self, s: &mut Session, kind: EventKind, payload: Value) {
        self.event_clock += 1;
        let record = EventRecord {
            clock: self.event_clock,
            conversation_id: s.conversation_id.clone(),
            kind,
            payload,
        };
        for observer in &mut self.observers {
            observer(&record);
        }
        if let Some((path, file)) = &mut self.log {
            if let Err(e) = file.write_all(record.to_line().as_bytes()) {
                tracing::warn!("cannot append to {}: {e}", path.display());
            }
        }
        s.records.push(record);
    }

    fn warn(&mut self, s: &mut Session, message: String) {
        tracing::debug!("{message}");
        self.emit(s, EventKind::Warning, json!({"message": message}));
    }

    /// Emits the trace's warnings and hands back its exchanges.
    fn drain(&mut self, s: &mut Session, trace: &mut Trace) -> Vec<Exchange> {
        let t = trace.take();
        for w in t.warnings {
            self.emit(s, EventKind::Warning, json!({"message": w}));
        }
        t.exchanges
    }

    fn act(&mut self, s: &mut Session, inference: &IntentInference) {
        let mut trace = Trace::default();
        let ctx = DecideContext {
            home: &self.home,
            memory: &self.memory,
            scenarios: &self.scenarios,
            backend: &*self.backend,
        };
        let result = decide(inference, &ctx, &mut trace);
        let exchanges = self.drain(s, &mut trace);
        let decision = match result {
            Ok(d) => d,
            Err(e) => {
                self.emit(s, EventKind::Decision, json!({"error": e.to_string(), "exchanges": exchanges}));
                self.warn(s, format!("decision failed: {e}"));
                s.replies.push(APOLOGY.into());
                return;
            }
        };
        self.emit(s, EventKind::Decision, json!({"decision": decision, "exchanges": exchanges}));
        s.transcript.push(format!("Decision: {}", decision.variant()));
        match decision {
            AgentDecision::UpdateMemory { note } => {
                let note: String = note.chars().take(crate::agent::SUMMARY_MAX_CHARS).collect();
                match self
                    .memory
                    .append_long_term(MemoryKind::PreferenceNote, &note, &s.conversation_id)
                {
                    Ok(_) => s.replies.push(format!("Noted: {}", sentence(&note))),
                    Err(e) => {
                        self.warn(s, format!("note not persisted: {e}"));
                        s.replies.push(APOLOGY.into());
                    }
                }
            }
            AgentDecision::RunScenario { name } => {
                s.action_bearing = true;
                let plan = self
                    .scenarios
                    .get(&name)
                    .map(|sc| sc.plan.clone())
                    .unwrap_or_default();
                self.execute(s, &plan);
            }
            AgentDecision::ExecutePlan { plan } => {
                s.action_bearing = true;
                self.execute(s, &plan);
            }
            AgentDecision::StoreRule { trigger, plan } => {
                s.action_bearing = true;
                let steps = plan.steps.len();
                match self.memory.save_rule(trigger.clone(), plan, self.home.logical_clock) {
                    Ok(id) => s.replies.push(format!(
                        "Saved rule {id}: when {}, I will run {steps} step{}.",
                        trigger.describe(),
                        if steps == 1 { "" } else { "s" }
                    )),
                    Err(e) => {
                        self.warn(s, format!("rule not persisted: {e}"));
                        s.replies.push(APOLOGY.into());
                    }
                }
            }
        }
    }

    /// Feasibility check, compilation, validation and execution of one plan.
    fn execute(&mut self, s: &mut Session, plan: &TaskPlan) {
        let feasibility = check_feasibility(plan, &self.home);
        let mut keep: BTreeSet<usize> = feasibility.feasible.iter().map(|f| f.index).collect();
        let mut dropped = Vec::new();
        for v in &feasibility.violations {
            if v.violation.is_hard() {
                if let Some(c) = proposal(&plan.steps[v.index], &self.home) {
                    dropped.push(c);
                }
            } else {
                keep.insert(v.index);
            }
        }
        s.candidates.extend(dropped.iter().cloned());

        if keep.is_empty() {
            let refs: Vec<String> = feasibility
                .violations
                .iter()
                .map(|v| plan.steps[v.index].device_ref.to_string())
                .collect();
            self.emit(
                s,
                EventKind::Commands,
                json!({"candidates": dropped, "executed": [], "violations": feasibility.violations}),
            );
            s.replies.push(if refs.is_empty() {
                "There was nothing to do.".to_string()
            } else {
                format!(
                    "Sorry, I could not do that with {} in this home; which device did you mean?",
                    refs.join(", ")
                )
            });
            return;
        }

        let filtered = TaskPlan {
            steps: keep.iter().map(|&i| plan.steps[i].clone()).collect(),
            persist_trigger: None,
        };
        let mut trace = Trace::default();
        let result = compile_plan(&filtered, &self.home, &*self.backend, &mut trace);
        let exchanges = self.drain(s, &mut trace);
        let compiled = match result {
            Ok(c) => c,
            Err(failure) => {
                let proposed: Vec<DeviceCommand> =
                    failure.attempts.iter().flat_map(|a| a.proposed()).collect();
                s.candidates.extend(proposed.iter().cloned());
                let mut all = dropped;
                all.extend(proposed);
                self.emit(
                    s,
                    EventKind::Commands,
                    json!({"candidates": all, "executed": [], "violations": feasibility.violations,
                           "error": failure, "exchanges": exchanges}),
                );
                self.warn(s, failure.to_string());
                s.replies.push(APOLOGY.into());
                return;
            }
        };
        let proposed: Vec<DeviceCommand> = compiled.candidates.iter().map(|(_, c)| c.clone()).collect();
        s.candidates.extend(proposed.iter().cloned());
        let mut all = dropped;
        all.extend(proposed);
        self.emit(
            s,
            EventKind::Commands,
            json!({"candidates": all, "executed": compiled.commands, "rejections": compiled.rejections,
                   "violations": feasibility.violations, "attempts": compiled.attempts, "exchanges": exchanges}),
        );

        let mut done = Vec::new();
        for cmd in compiled.commands {
            // Last line of defence: nothing unvalidated touches the home.
            if let Err(reason) = check_command(&cmd, &self.home) {
                self.warn(s, format!("refused {cmd}: {reason:?}"));
                continue;
            }
            let old = self.home.devices[&cmd.device].state.get(&cmd.action).cloned();
            if let Err(e) = self.home.apply_command(&cmd) {
                self.warn(s, format!("could not apply {cmd}: {e}"));
                continue;
            }
            let new = self.home.devices[&cmd.device].state.get(&cmd.action).cloned();
            self.emit(
                s,
                EventKind::StateChange,
                json!({"room": cmd.room, "device": cmd.device, "action": cmd.action, "old": old, "new": new,
                       "clock": self.home.logical_clock}),
            );
            s.transcript.push(format!("Executed: {cmd}"));
            done.push(describe_command(&cmd));
            s.commands.push(cmd);
        }
        s.replies.push(if done.is_empty() {
            "Sorry, none of those commands could be carried out.".to_string()
        } else {
            format!("Done: {}.", join_and(&done))
        });
    }

    /// Summarizes action-bearing interactions and emits the reply.
    fn finish(&mut self, s: &mut Session) {
        let mut summary = Value::Null;
        let mut exchanges = Vec::new();
        if s.action_bearing {
            let mut trace = Trace::default();
            let mut transcript = s.transcript.clone();
            transcript.push(format!("Assistant replied: {}", s.replies.join(" ")));
            if let Some(entry) = summarize_interaction(
                &transcript,
                &*self.backend,
                &mut self.memory,
                &s.conversation_id,
                &mut trace,
            ) {
                summary = json!(entry.text);
            }
            exchanges = self.drain(s, &mut trace);
        }
        let text = s.replies.join(" ");
        self.emit(
            s,
            EventKind::ReplyOut,
            json!({"text": text, "summary": summary, "exchanges": exchanges}),
        );
    }
}

fn describe_command(cmd: &DeviceCommand) -> String {
    match (cmd.action.as_str(), &cmd.value) {
        ("power", Value::Bool(true)) => format!("turned on {}", cmd.device),
        ("power", Value::Bool(false)) => format!("turned off {}", cmd.device),
        (action, value) => format!("set {} {action} to {value}", cmd.device),
    }
}

fn join_and(parts: &[String]) -> String {
    match parts {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn sentence(text: &str) -> String {
    let t = text.trim();
    if t.ends_with(['.', '!', '?']) {
        t.to_string()
    } else {
        format!("{t}.")
    }
}
