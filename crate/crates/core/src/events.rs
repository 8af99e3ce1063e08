use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UtteranceIn,
    SensorIn,
    Inference,
    Decision,
    Commands,
    StateChange,
    ReplyOut,
    Warning,
}

/// One line of the event stream and of `logs/interactions.jsonl`. `clock`
/// counts records, not time, so replayed sessions log identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub clock: u64,
    pub conversation_id: String,
    pub kind: EventKind,
    pub payload: Value,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("event records serialize");
        s.push('\n');
        s
    }
}
