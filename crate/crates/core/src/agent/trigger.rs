use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::home::{HomeState, Sensor, SensorEvent, StateValue};

pub const MAX_TRIGGER_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareOp {
    Eq,
    Gt,
    Lt,
    ChangedTo,
}

/// Trigger grammar for stored rules: sensor comparisons, logical-clock
/// interval markers, and `all`/`any` combinators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TriggerPredicate {
    Compare {
        sensor: String,
        op: CompareOp,
        value: Value,
    },
    /// True on events whose logical clock is a multiple of `clock_at`.
    ClockAt { clock_at: u64 },
    All { all: Vec<TriggerPredicate> },
    Any { any: Vec<TriggerPredicate> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriggerError {
    #[error("trigger references unknown sensor `{0}`")]
    UnknownSensor(String),
    #[error("trigger value {value} does not fit sensor `{sensor}`")]
    BadValue { sensor: String, value: String },
    #[error("trigger is nested deeper than {MAX_TRIGGER_DEPTH} levels")]
    TooDeep,
    #[error("clock_at interval must be positive")]
    ZeroInterval,
    #[error("empty combinator")]
    Empty,
}

impl TriggerPredicate {
    pub fn sensor(sensor: &str, op: CompareOp, value: Value) -> Self {
        TriggerPredicate::Compare {
            sensor: sensor.into(),
            op,
            value,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TriggerPredicate::Compare { .. } | TriggerPredicate::ClockAt { .. } => 1,
            TriggerPredicate::All { all: c } | TriggerPredicate::Any { any: c } => {
                1 + c.iter().map(Self::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn validate(&self, home: &HomeState) -> Result<(), TriggerError> {
        if self.depth() > MAX_TRIGGER_DEPTH {
            return Err(TriggerError::TooDeep);
        }
        self.validate_node(home)
    }

    fn validate_node(&self, home: &HomeState) -> Result<(), TriggerError> {
        match self {
            TriggerPredicate::Compare { sensor, op, value } => {
                let s = home
                    .sensors
                    .get(sensor)
                    .ok_or_else(|| TriggerError::UnknownSensor(sensor.clone()))?;
                let fits = match op {
                    CompareOp::Gt | CompareOp::Lt => !s.kind.is_boolean() && value.is_number(),
                    CompareOp::Eq | CompareOp::ChangedTo => s.kind.read(value).is_some(),
                };
                if fits {
                    Ok(())
                } else {
                    Err(TriggerError::BadValue {
                        sensor: sensor.clone(),
                        value: value.to_string(),
                    })
                }
            }
            TriggerPredicate::ClockAt { clock_at } => {
                if *clock_at == 0 {
                    Err(TriggerError::ZeroInterval)
                } else {
                    Ok(())
                }
            }
            TriggerPredicate::All { all: c } | TriggerPredicate::Any { any: c } => {
                if c.is_empty() {
                    return Err(TriggerError::Empty);
                }
                c.iter().try_for_each(|p| p.validate_node(home))
            }
        }
    }

    /// Whether any comparison in the tree reads `sensor_id`.
    pub fn references(&self, sensor_id: &str) -> bool {
        match self {
            TriggerPredicate::Compare { sensor, .. } => sensor == sensor_id,
            TriggerPredicate::ClockAt { .. } => false,
            TriggerPredicate::All { all: c } | TriggerPredicate::Any { any: c } => {
                c.iter().any(|p| p.references(sensor_id))
            }
        }
    }

    pub fn has_clock_marker(&self) -> bool {
        match self {
            TriggerPredicate::ClockAt { .. } => true,
            TriggerPredicate::Compare { .. } => false,
            TriggerPredicate::All { all: c } | TriggerPredicate::Any { any: c } => {
                c.iter().any(Self::has_clock_marker)
            }
        }
    }

    /// Evaluates against the event and the current sensor readings. `changed_to`
    /// only holds for the event's own sensor, using its old/new pair.
    pub fn evaluate(&self, event: &SensorEvent, sensors: &BTreeMap<String, Sensor>) -> bool {
        match self {
            TriggerPredicate::Compare { sensor, op, value } => {
                let Some(s) = sensors.get(sensor) else {
                    return false;
                };
                match op {
                    CompareOp::ChangedTo => {
                        let Some(target) = s.kind.read(value) else {
                            return false;
                        };
                        event.sensor_id == *sensor
                            && event.new_value == target
                            && event.old_value != target
                    }
                    CompareOp::Eq => s.kind.read(value).is_some_and(|v| v == s.value),
                    CompareOp::Gt => cmp(&s.value, value).is_some_and(|o| o.is_gt()),
                    CompareOp::Lt => cmp(&s.value, value).is_some_and(|o| o.is_lt()),
                }
            }
            TriggerPredicate::ClockAt { clock_at } => *clock_at > 0 && event.clock.is_multiple_of(*clock_at),
            TriggerPredicate::All { all } => all.iter().all(|p| p.evaluate(event, sensors)),
            TriggerPredicate::Any { any } => any.iter().any(|p| p.evaluate(event, sensors)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TriggerPredicate::Compare { sensor, op, value } => {
                let op = match op {
                    CompareOp::Eq => "=",
                    CompareOp::Gt => ">",
                    CompareOp::Lt => "<",
                    CompareOp::ChangedTo => "becomes",
                };
                format!("{sensor} {op} {value}")
            }
            TriggerPredicate::ClockAt { clock_at } => format!("every {clock_at} ticks"),
            TriggerPredicate::All { all } => {
                all.iter().map(Self::describe).collect::<Vec<_>>().join(" and ")
            }
            TriggerPredicate::Any { any } => {
                any.iter().map(Self::describe).collect::<Vec<_>>().join(" or ")
            }
        }
    }
}

fn cmp(current: &StateValue, target: &Value) -> Option<std::cmp::Ordering> {
    current.as_f64()?.partial_cmp(&target.as_f64()?)
}
