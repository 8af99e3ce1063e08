//! Virtual home: rooms, devices with typed capabilities, sensors, and the
//! command/sensor state machine driven by a logical clock.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::command::DeviceCommand;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomeError {
    #[error("malformed home definition: {0}")]
    Parse(String),
    #[error("invalid home definition at {path}: {reason}")]
    Validation { path: String, reason: String },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("device `{device}` has no capability `{capability}`")]
    UnknownCapability { device: String, capability: String },
    #[error("value {value} is out of range for {device}.{capability}")]
    ValueOutOfRange {
        device: String,
        capability: String,
        value: String,
    },
    #[error("unknown sensor `{0}`")]
    UnknownSensor(String),
    #[error("sensor `{sensor}` expects a {expected} reading, got {got}")]
    TypeMismatch {
        sensor: String,
        expected: &'static str,
        got: String,
    },
}

/// A device or sensor value. Integers and reals are kept apart so that the
/// snapshot and the logs render exactly what the capability declares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl StateValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            StateValue::Int(i) => Some(*i as f64),
            StateValue::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            StateValue::Bool(b) => Value::Bool(*b),
            StateValue::Int(i) => Value::from(*i),
            StateValue::Real(r) => serde_json::Number::from_f64(*r)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            StateValue::Text(s) => Value::String(s.clone()),
        }
    }
}

impl fmt::Display for StateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateValue::Bool(b) => write!(f, "{b}"),
            StateValue::Int(i) => write!(f, "{i}"),
            StateValue::Real(r) => f.write_str(&format_real(*r)),
            StateValue::Text(s) => f.write_str(s),
        }
    }
}

/// At most two decimals, trailing zeros trimmed but one kept: 21 -> "21.0".
pub fn format_real(r: f64) -> String {
    let mut s = format!("{r:.2}");
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    if s == "-0.0" {
        s = "0.0".into();
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Boolean,
    Integer,
    Real,
    Enumeration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Range {
    Numeric { min: f64, max: f64 },
    Members(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilitySpec {
    pub name: String,
    pub value_type: ValueType,
    pub range: Option<Range>,
    pub default: StateValue,
}

impl CapabilitySpec {
    /// Coerces a JSON value into this capability's domain, or `None` when it
    /// does not type-check or falls outside the range.
    pub fn accept(&self, value: &Value) -> Option<StateValue> {
        let v = match (self.value_type, value) {
            (ValueType::Boolean, Value::Bool(b)) => StateValue::Bool(*b),
            (ValueType::Integer, Value::Number(n)) => {
                if let Some(i) = n.as_i64() {
                    StateValue::Int(i)
                } else {
                    let f = n.as_f64()?;
                    if f.fract() != 0.0 || !f.is_finite() || f.abs() > 9.0e15 {
                        return None;
                    }
                    StateValue::Int(f as i64)
                }
            }
            (ValueType::Real, Value::Number(n)) => {
                let f = n.as_f64()?;
                if !f.is_finite() {
                    return None;
                }
                StateValue::Real(f)
            }
            (ValueType::Enumeration, Value::String(s)) => StateValue::Text(s.clone()),
            _ => return None,
        };
        self.contains(&v).then_some(v)
    }

    pub fn contains(&self, v: &StateValue) -> bool {
        let typed = matches!(
            (self.value_type, v),
            (ValueType::Boolean, StateValue::Bool(_))
                | (ValueType::Integer, StateValue::Int(_))
                | (ValueType::Real, StateValue::Real(_))
                | (ValueType::Enumeration, StateValue::Text(_))
        );
        if !typed {
            return false;
        }
        match (&self.range, v) {
            (None, _) => true,
            (Some(Range::Numeric { min, max }), v) => {
                v.as_f64().is_some_and(|x| x >= *min && x <= *max)
            }
            (Some(Range::Members(m)), StateValue::Text(s)) => m.iter().any(|x| x == s),
            (Some(Range::Members(_)), _) => false,
        }
    }

    /// Short human description of the legal values, used in prompts.
    pub fn describe_range(&self) -> String {
        match (&self.value_type, &self.range) {
            (ValueType::Boolean, _) => "true|false".into(),
            (_, Some(Range::Numeric { min, max })) => {
                if self.value_type == ValueType::Integer {
                    format!("{}..{}", *min as i64, *max as i64)
                } else {
                    format!("{}..{}", format_real(*min), format_real(*max))
                }
            }
            (_, Some(Range::Members(m))) => m.join("|"),
            (ValueType::Integer, None) => "integer".into(),
            (ValueType::Real, None) => "number".into(),
            (ValueType::Enumeration, None) => "text".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Device {
    pub id: String,
    pub kind: String,
    pub room_id: String,
    #[serde(skip)]
    pub capabilities: BTreeMap<String, CapabilitySpec>,
    pub state: BTreeMap<String, StateValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Motion,
    Temperature,
    Humidity,
    DoorContact,
    Illuminance,
}

impl SensorKind {
    pub fn is_boolean(self) -> bool {
        matches!(self, SensorKind::Motion | SensorKind::DoorContact)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Motion => "motion",
            SensorKind::Temperature => "temperature",
            SensorKind::Humidity => "humidity",
            SensorKind::DoorContact => "door_contact",
            SensorKind::Illuminance => "illuminance",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SensorKind::Temperature => " °C",
            SensorKind::Humidity => " %RH",
            SensorKind::Illuminance => " lux",
            _ => "",
        }
    }

    /// Type-checks a raw reading against this sensor kind.
    pub fn read(self, value: &Value) -> Option<StateValue> {
        match (self.is_boolean(), value) {
            (true, Value::Bool(b)) => Some(StateValue::Bool(*b)),
            (false, Value::Number(n)) => n
                .as_f64()
                .filter(|f| f.is_finite())
                .map(StateValue::Real),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sensor {
    pub id: String,
    pub kind: SensorKind,
    pub room_id: String,
    pub value: StateValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Room {
    pub name: String,
    pub devices: BTreeSet<String>,
    pub sensors: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorEvent {
    pub sensor_id: String,
    pub old_value: StateValue,
    pub new_value: StateValue,
    pub clock: u64,
}

/// The single mutable world model.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct HomeState {
    pub rooms: BTreeMap<String, Room>,
    pub devices: BTreeMap<String, Device>,
    pub sensors: BTreeMap<String, Sensor>,
    pub logical_clock: u64,
}

// Wire format of the home-definition document.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HomeDoc {
    #[serde(default)]
    rooms: Vec<RoomDoc>,
}

#[derive(Deserialize)]
struct RoomDoc {
    id: String,
    name: String,
    #[serde(default)]
    devices: Vec<DeviceDoc>,
    #[serde(default)]
    sensors: Vec<SensorDoc>,
}

#[derive(Deserialize)]
struct DeviceDoc {
    id: String,
    kind: String,
    /// Overrides the enclosing room; must name a room defined in the document.
    #[serde(default)]
    room_id: Option<String>,
    #[serde(default)]
    capabilities: BTreeMap<String, CapabilityDoc>,
}

#[derive(Deserialize)]
struct CapabilityDoc {
    #[serde(rename = "type")]
    value_type: ValueType,
    #[serde(default)]
    range: Option<[f64; 2]>,
    #[serde(default)]
    members: Option<Vec<String>>,
    default: Value,
}

#[derive(Deserialize)]
struct SensorDoc {
    id: String,
    kind: SensorKind,
    initial: Value,
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> HomeError {
    HomeError::Validation {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Parses and validates a home-definition document. All device states start
/// at their capability defaults and the clock starts at zero.
pub fn load_home(document: &str) -> Result<HomeState, HomeError> {
    let doc: HomeDoc =
        serde_json::from_str(document).map_err(|e| HomeError::Parse(e.to_string()))?;

    let mut home = HomeState::default();
    for (ri, room) in doc.rooms.iter().enumerate() {
        if room.id.is_empty() {
            return Err(invalid(format!("rooms[{ri}].id"), "empty room id"));
        }
        let prev = home.rooms.insert(
            room.id.clone(),
            Room {
                name: room.name.clone(),
                devices: BTreeSet::new(),
                sensors: BTreeSet::new(),
            },
        );
        if prev.is_some() {
            return Err(invalid(
                format!("rooms[{ri}].id"),
                format!("duplicate room id `{}`", room.id),
            ));
        }
    }

    for (ri, room) in doc.rooms.iter().enumerate() {
        for (di, dev) in room.devices.iter().enumerate() {
            let path = format!("rooms[{ri}].devices[{di}]");
            let room_id = dev.room_id.clone().unwrap_or_else(|| room.id.clone());
            if !home.rooms.contains_key(&room_id) {
                return Err(invalid(
                    format!("{path}.room_id"),
                    format!("room `{room_id}` is not defined"),
                ));
            }
            if dev.id.is_empty() {
                return Err(invalid(format!("{path}.id"), "empty device id"));
            }
            if home.devices.contains_key(&dev.id) || home.sensors.contains_key(&dev.id) {
                return Err(invalid(
                    format!("{path}.id"),
                    format!("duplicate id `{}`", dev.id),
                ));
            }
            let mut capabilities = BTreeMap::new();
            let mut state = BTreeMap::new();
            for (name, cap) in &dev.capabilities {
                let spec = build_capability(&format!("{path}.capabilities.{name}"), name, cap)?;
                state.insert(name.clone(), spec.default.clone());
                capabilities.insert(name.clone(), spec);
            }
            home.rooms
                .get_mut(&room_id)
                .expect("room checked above")
                .devices
                .insert(dev.id.clone());
            home.devices.insert(
                dev.id.clone(),
                Device {
                    id: dev.id.clone(),
                    kind: dev.kind.clone(),
                    room_id,
                    capabilities,
                    state,
                },
            );
        }
        for (si, sen) in room.sensors.iter().enumerate() {
            let path = format!("rooms[{ri}].sensors[{si}]");
            if home.devices.contains_key(&sen.id) || home.sensors.contains_key(&sen.id) {
                return Err(invalid(
                    format!("{path}.id"),
                    format!("duplicate id `{}`", sen.id),
                ));
            }
            let value = sen.kind.read(&sen.initial).ok_or_else(|| {
                invalid(
                    format!("{path}.initial"),
                    format!("not a valid {} reading", sen.kind.as_str()),
                )
            })?;
            home.rooms
                .get_mut(&room.id)
                .expect("room inserted above")
                .sensors
                .insert(sen.id.clone());
            home.sensors.insert(
                sen.id.clone(),
                Sensor {
                    id: sen.id.clone(),
                    kind: sen.kind,
                    room_id: room.id.clone(),
                    value,
                },
            );
        }
    }
    Ok(home)
}

fn build_capability(path: &str, name: &str, doc: &CapabilityDoc) -> Result<CapabilitySpec, HomeError> {
    let range = match doc.value_type {
        ValueType::Boolean => None,
        ValueType::Integer | ValueType::Real => match doc.range {
            Some([min, max]) => {
                // Written this way round so NaN bounds are rejected too.
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                if !(min <= max) {
                    return Err(invalid(format!("{path}.range"), "min is greater than max"));
                }
                Some(Range::Numeric { min, max })
            }
            None => None,
        },
        ValueType::Enumeration => {
            let members = doc.members.clone().unwrap_or_default();
            if members.is_empty() {
                return Err(invalid(
                    format!("{path}.members"),
                    "enumeration needs at least one member",
                ));
            }
            Some(Range::Members(members))
        }
    };
    let mut spec = CapabilitySpec {
        name: name.to_string(),
        value_type: doc.value_type,
        range,
        default: StateValue::Bool(false),
    };
    spec.default = spec.accept(&doc.default).ok_or_else(|| {
        invalid(
            format!("{path}.default"),
            format!("default {} is outside the declared range", doc.default),
        )
    })?;
    Ok(spec)
}

impl HomeState {
    /// Assigns `cmd.value` to the target capability. Commands are expected to
    /// be validated upstream; every error here means the validation layer was
    /// bypassed.
    pub fn apply_command(&mut self, cmd: &DeviceCommand) -> Result<(), HomeError> {
        let device = self
            .devices
            .get_mut(&cmd.device)
            .ok_or_else(|| HomeError::UnknownDevice(cmd.device.clone()))?;
        let spec = device
            .capabilities
            .get(&cmd.action)
            .ok_or_else(|| HomeError::UnknownCapability {
                device: cmd.device.clone(),
                capability: cmd.action.clone(),
            })?;
        let value = spec
            .accept(&cmd.value)
            .ok_or_else(|| HomeError::ValueOutOfRange {
                device: cmd.device.clone(),
                capability: cmd.action.clone(),
                value: cmd.value.to_string(),
            })?;
        device.state.insert(cmd.action.clone(), value);
        self.logical_clock += 1;
        Ok(())
    }

    pub fn inject_sensor_event(
        &mut self,
        sensor_id: &str,
        new_value: &Value,
    ) -> Result<SensorEvent, HomeError> {
        let sensor = self
            .sensors
            .get_mut(sensor_id)
            .ok_or_else(|| HomeError::UnknownSensor(sensor_id.to_string()))?;
        let value = sensor
            .kind
            .read(new_value)
            .ok_or_else(|| HomeError::TypeMismatch {
                sensor: sensor_id.to_string(),
                expected: if sensor.kind.is_boolean() {
                    "boolean"
                } else {
                    "finite real"
                },
                got: new_value.to_string(),
            })?;
        let old_value = std::mem::replace(&mut sensor.value, value.clone());
        self.logical_clock += 1;
        Ok(SensorEvent {
            sensor_id: sensor_id.to_string(),
            old_value,
            new_value: value,
            clock: self.logical_clock,
        })
    }

    /// Room-grouped, deterministic listing of every device and sensor. This is
    /// the only device vocabulary the model is shown.
    pub fn snapshot_inventory(&self) -> String {
        let mut out = String::new();
        for (room_id, room) in &self.rooms {
            out.push_str(&format!("[{room_id}] {}\n", room.name));
            for dev_id in &room.devices {
                let dev = &self.devices[dev_id];
                let state: Vec<String> = dev
                    .state
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                out.push_str(&format!(
                    "  device {dev_id} ({}): {}\n",
                    dev.kind,
                    state.join(", ")
                ));
            }
            for sen_id in &room.sensors {
                let sen = &self.sensors[sen_id];
                out.push_str(&format!(
                    "  sensor {sen_id} ({}): {}{}\n",
                    sen.kind.as_str(),
                    sen.value,
                    sen.kind.unit()
                ));
            }
        }
        out
    }

    /// Like [`snapshot_inventory`](Self::snapshot_inventory) but also lists
    /// each capability's legal values; used for the decide and compile prompts.
    pub fn capability_listing(&self) -> String {
        let mut out = String::new();
        for (room_id, room) in &self.rooms {
            out.push_str(&format!("[{room_id}] {}\n", room.name));
            for dev_id in &room.devices {
                let dev = &self.devices[dev_id];
                let caps: Vec<String> = dev
                    .capabilities
                    .values()
                    .map(|c| format!("{}={} ({})", c.name, dev.state[&c.name], c.describe_range()))
                    .collect();
                out.push_str(&format!("  {dev_id} ({}): {}\n", dev.kind, caps.join(", ")));
            }
        }
        out
    }

    /// Rooms missing a light device or a motion sensor.
    pub fn coverage_gaps(&self) -> Vec<String> {
        self.rooms
            .iter()
            .filter(|(_, room)| {
                let has_light = room.devices.iter().any(|d| self.devices[d].kind == "light");
                let has_motion = room
                    .sensors
                    .iter()
                    .any(|s| self.sensors[s].kind == SensorKind::Motion);
                !(has_light && has_motion)
            })
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Resolves a room reference by id or display name; case-insensitive, with
    /// spaces and underscores treated as equivalent.
    pub fn find_room(&self, hint: &str) -> Option<&str> {
        let norm = normalize_name(hint);
        if norm.is_empty() {
            return None;
        }
        self.rooms
            .iter()
            .find(|(id, room)| normalize_name(id) == norm || normalize_name(&room.name) == norm)
            .map(|(id, _)| id.as_str())
    }

    pub fn devices_of_kind<'a>(
        &'a self,
        kind: &'a str,
        room: Option<&'a str>,
    ) -> impl Iterator<Item = &'a Device> + 'a {
        let kind = normalize_name(kind);
        self.devices
            .values()
            .filter(move |d| normalize_name(&d.kind) == kind)
            .filter(move |d| room.is_none_or(|r| d.room_id == r))
    }

    pub fn has_kind(&self, kind: &str) -> bool {
        self.devices_of_kind(kind, None).next().is_some()
    }
}

pub fn normalize_name(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .split(|c: char| c == '_' || c.is_whitespace())
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}
