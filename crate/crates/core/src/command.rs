use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A fully resolved, executable device command. The serialized form is the
/// wire shape used by the HTTP API, the compile stage and the decision logs:
/// `{"room": string, "device": string, "action": string, "value": boolean|number|string|null}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceCommand {
    pub room: String,
    pub device: String,
    pub action: String,
    pub value: Value,
}

impl DeviceCommand {
    pub fn new(
        room: impl Into<String>,
        device: impl Into<String>,
        action: impl Into<String>,
        value: Value,
    ) -> Self {
        Self {
            room: room.into(),
            device: device.into(),
            action: action.into(),
            value,
        }
    }
}

impl fmt::Display for DeviceCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}={} ({})", self.device, self.action, self.value, self.room)
    }
}
