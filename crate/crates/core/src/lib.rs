//! A local smart-home assistant.
//!
//! Every inbound message (an utterance, a sensor change or a timer) flows
//! through three stages: the [`handler`] classifies it, the [`agent`] decides
//! what to do and the [`controller`] turns plans into validated device
//! commands. Each stage talks to a pluggable [`llm`] backend.

pub mod agent;
pub mod assets;
pub mod bench;
pub mod command;
pub mod controller;
pub mod eval;
pub mod events;
pub mod handler;
pub mod home;
pub mod llm;
pub mod memory;
pub mod runtime;
pub mod trace;

pub use agent::{AgentDecision, TaskPlan, TaskStep, TriggerPredicate};
pub use command::DeviceCommand;
pub use handler::{InboundMessage, IntentInference, Urgency};
pub use home::{load_home, HomeError, HomeState, SensorEvent, StateValue};
pub use llm::{BackendError, BackendSpec, CompletionBackend, CompletionRequest, CompletionResponse, Stage};
pub use memory::{MemoryEntry, MemoryKind, MemoryStore, Rule};
pub use events::{EventKind, EventRecord};
pub use runtime::{Assistant, Interaction};
