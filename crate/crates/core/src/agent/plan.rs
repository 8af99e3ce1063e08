use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::trigger::TriggerPredicate;
use crate::home::{normalize_name, HomeState};

/// How a step names its device: an id (`"lr_tv"`), a description
/// (`"light in bedroom_1"`), or an explicit `{"kind","room"}` object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceRef {
    Text(String),
    Described {
        kind: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        room: Option<String>,
    },
}

impl fmt::Display for DeviceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceRef::Text(s) => f.write_str(s),
            DeviceRef::Described { kind, room: Some(r) } => write!(f, "{kind} in {r}"),
            DeviceRef::Described { kind, room: None } => f.write_str(kind),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStep {
    #[serde(rename = "room", default, skip_serializing_if = "Option::is_none")]
    pub room_hint: Option<String>,
    #[serde(rename = "device")]
    pub device_ref: DeviceRef,
    pub capability: String,
    #[serde(rename = "value")]
    pub target_value: Value,
    #[serde(default)]
    pub rationale: String,
}

impl TaskStep {
    pub fn new(device: &str, capability: &str, value: Value) -> Self {
        TaskStep {
            room_hint: None,
            device_ref: DeviceRef::Text(device.into()),
            capability: capability.into(),
            target_value: value,
            rationale: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskPlan {
    pub steps: Vec<TaskStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persist_trigger: Option<TriggerPredicate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoomAssignment {
    Room(String),
    UnknownRoom(String),
    /// No hint and the device could not be resolved.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceResolution {
    Unique(String),
    Ambiguous(Vec<String>),
    Unknown,
}

/// Resolves a step's room hint: `None` when there is no hint, `Err` with the
/// hint text when it names no room.
pub fn resolve_room_hint(step: &TaskStep, home: &HomeState) -> Option<Result<String, String>> {
    step.room_hint.as_ref().map(|h| {
        home.find_room(h)
            .map(str::to_string)
            .ok_or_else(|| h.clone())
    })
}

/// Resolves the device reference against the home. Ids win; otherwise the
/// reference is read as `<kind>` or `<kind> in <room>`, with a trailing
/// plural `s` tolerated on the kind.
pub fn resolve_device(step: &TaskStep, home: &HomeState) -> DeviceResolution {
    let hint_room = match resolve_room_hint(step, home) {
        Some(Ok(r)) => Some(r),
        _ => None,
    };
    let (kind, room_text) = match &step.device_ref {
        DeviceRef::Text(s) => {
            if home.devices.contains_key(s) {
                return DeviceResolution::Unique(s.clone());
            }
            if let Some(id) = home.devices.keys().find(|id| id.eq_ignore_ascii_case(s.trim())) {
                return DeviceResolution::Unique(id.clone());
            }
            match s.rsplit_once(" in ") {
                Some((k, r)) => (k.to_string(), Some(r.to_string())),
                None => (s.clone(), None),
            }
        }
        DeviceRef::Described { kind, room } => (kind.clone(), room.clone()),
    };

    let room = match room_text {
        Some(r) => match home.find_room(strip_article(&r)) {
            Some(id) => Some(id.to_string()),
            None => return DeviceResolution::Unknown,
        },
        None => hint_room,
    };

    let kind = normalize_name(strip_article(&kind));
    let mut matches: Vec<String> = home
        .devices_of_kind(&kind, room.as_deref())
        .map(|d| d.id.clone())
        .collect();
    if matches.is_empty() {
        if let Some(singular) = kind.strip_suffix('s') {
            matches = home
                .devices_of_kind(singular, room.as_deref())
                .map(|d| d.id.clone())
                .collect();
        }
    }
    match matches.len() {
        0 => DeviceResolution::Unknown,
        1 => DeviceResolution::Unique(matches.remove(0)),
        _ => DeviceResolution::Ambiguous(matches),
    }
}

fn strip_article(s: &str) -> &str {
    let t = s.trim();
    for a in ["the ", "The "] {
        if let Some(rest) = t.strip_prefix(a) {
            return rest.trim();
        }
    }
    t
}
