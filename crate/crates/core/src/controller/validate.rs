use serde::Serialize;
use serde_json::Value;

use crate::command::DeviceCommand;
use crate::home::HomeState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    HallucinatedDevice,
    WrongRoom,
    UnknownAction,
    BadValue,
    BadShape,
    /// Valid on its own, but not one of the devices the step allowed.
    NotACandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub index: usize,
    pub candidate: Value,
    pub reason: RejectionReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Validation {
    pub commands: Vec<DeviceCommand>,
    pub rejections: Vec<Rejection>,
}

impl Validation {
    pub fn is_clean(&self) -> bool {
        self.rejections.is_empty()
    }
}

/// Checks candidate commands in order: shape, device existence, room
/// placement, capability, value. A lone object is treated as a one-element
/// list.
pub fn validate_commands(candidates: &Value, home: &HomeState) -> Validation {
    let items: Vec<&Value> = match candidates {
        Value::Array(a) => a.iter().collect(),
        other => vec![other],
    };
    let mut out = Validation::default();
    for (index, item) in items.into_iter().enumerate() {
        match check_one(item, home) {
            Ok(cmd) => out.commands.push(cmd),
            Err(reason) => out.rejections.push(Rejection {
                index,
                candidate: item.clone(),
                reason,
            }),
        }
    }
    out
}

/// Parses a candidate into the bit-exact command shape, if it has it.
pub fn command_shape(item: &Value) -> Option<DeviceCommand> {
    let obj = item.as_object()?;
    if obj.len() != 4 {
        return None;
    }
    let s = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_string);
    let value = obj.get("value")?;
    if value.is_array() || value.is_object() {
        return None;
    }
    Some(DeviceCommand {
        room: s("room")?,
        device: s("device")?,
        action: s("action")?,
        value: value.clone(),
    })
}

fn check_one(item: &Value, home: &HomeState) -> Result<DeviceCommand, RejectionReason> {
    let cmd = command_shape(item).ok_or(RejectionReason::BadShape)?;
    check_command(&cmd, home)?;
    Ok(cmd)
}

pub fn check_command(cmd: &DeviceCommand, home: &HomeState) -> Result<(), RejectionReason> {
    let device = home
        .devices
        .get(&cmd.device)
        .ok_or(RejectionReason::HallucinatedDevice)?;
    if device.room_id != cmd.room {
        return Err(RejectionReason::WrongRoom);
    }
    let spec = device
        .capabilities
        .get(&cmd.action)
        .ok_or(RejectionReason::UnknownAction)?;
    spec.accept(&cmd.value).ok_or(RejectionReason::BadValue)?;
    Ok(())
}
