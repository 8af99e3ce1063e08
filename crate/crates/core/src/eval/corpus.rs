use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::command::DeviceCommand;
use crate::home::HomeState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Stimulus {
    Utterance(String),
    Sensor { sensor_id: String, value: Value },
}

/// Predicate on a command's value.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ValuePred {
    #[default]
    Any,
    Eq(Value),
    Ge(f64),
    Le(f64),
}

impl ValuePred {
    pub fn holds(&self, v: &Value) -> bool {
        match self {
            ValuePred::Any => true,
            ValuePred::Eq(want) => match (want.as_f64(), v.as_f64()) {
                (Some(a), Some(b)) => a == b,
                _ => want == v,
            },
            ValuePred::Ge(min) => v.as_f64().is_some_and(|x| x >= *min),
            ValuePred::Le(max) => v.as_f64().is_some_and(|x| x <= *max),
        }
    }
}

impl Serialize for ValuePred {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = match self {
            ValuePred::Any => Value::from("any"),
            ValuePred::Eq(v) => serde_json::json!({ "eq": v }),
            ValuePred::Ge(n) => serde_json::json!({ "ge": n }),
            ValuePred::Le(n) => serde_json::json!({ "le": n }),
        };
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ValuePred {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = Value::deserialize(d)?;
        if v == "any" {
            return Ok(ValuePred::Any);
        }
        let obj = v
            .as_object()
            .filter(|o| o.len() == 1)
            .ok_or_else(|| D::Error::custom("value predicate must be \"any\" or one of {eq|ge|le: v}"))?;
        let (k, x) = obj.iter().next().expect("one key");
        let num = || x.as_f64().ok_or_else(|| D::Error::custom(format!("{k} needs a number")));
        match k.as_str() {
            "eq" => Ok(ValuePred::Eq(x.clone())),
            "ge" => Ok(ValuePred::Ge(num()?)),
            "le" => Ok(ValuePred::Le(num()?)),
            other => Err(D::Error::custom(format!("unknown value predicate {other:?}"))),
        }
    }
}

/// Ground-truth shape of a command: `room` may be `*`, `device` may be
/// `kind:<kind>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSignature {
    pub room: String,
    pub device: String,
    pub action: String,
    #[serde(default)]
    pub value: ValuePred,
}

impl CommandSignature {
    /// A command matches only when it names an existing device in that
    /// device's actual room.
    pub fn matches(&self, cmd: &DeviceCommand, home: &HomeState) -> bool {
        let Some(device) = home.devices.get(&cmd.device) else {
            return false;
        };
        if device.room_id != cmd.room {
            return false;
        }
        if self.room != "*" && self.room != cmd.room {
            return false;
        }
        let device_ok = match self.device.strip_prefix("kind:") {
            Some(kind) => device.kind == kind,
            None => self.device == cmd.device,
        };
        device_ok && self.action == cmd.action && self.value.holds(&cmd.value)
    }

    fn resolves(&self, home: &HomeState) -> bool {
        if self.room != "*" && !home.rooms.contains_key(&self.room) {
            return false;
        }
        home.devices.values().any(|d| {
            let device_ok = match self.device.strip_prefix("kind:") {
                Some(kind) => d.kind == kind,
                None => d.id == self.device,
            };
            device_ok
                && (self.room == "*" || d.room_id == self.room)
                && d.capabilities.contains_key(&self.action)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalCase {
    pub id: String,
    pub stimulus: Stimulus,
    #[serde(default)]
    pub required: Vec<CommandSignature>,
    #[serde(default)]
    pub allowed: Vec<CommandSignature>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusDoc {
    cases: Vec<EvalCase>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("case {0}: a signature does not resolve against the home")]
    UnresolvableSignature(String),
    #[error("duplicate case id {0}")]
    DuplicateId(String),
}

/// Parses a corpus and checks every signature against `home`.
pub fn load_corpus(document: &str, home: &HomeState) -> Result<Vec<EvalCase>, CorpusError> {
    let doc: CorpusDoc = serde_json::from_str(document)?;
    let mut seen = std::collections::BTreeSet::new();
    for case in &doc.cases {
        if !seen.insert(case.id.as_str()) {
            return Err(CorpusError::DuplicateId(case.id.clone()));
        }
        if !case.required.iter().chain(&case.allowed).all(|s| s.resolves(home)) {
            return Err(CorpusError::UnresolvableSignature(case.id.clone()));
        }
    }
    Ok(doc.cases)
}
