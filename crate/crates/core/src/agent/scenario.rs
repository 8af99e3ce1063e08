use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::plan::{TaskPlan, TaskStep};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plan: TaskPlan,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioRegistry {
    scenarios: Vec<Scenario>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate scenario name `{0}`")]
    Duplicate(String),
    #[error("scenario `{0}` has no steps")]
    Empty(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDoc {
    scenarios: Vec<ScenarioDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    steps: Vec<TaskStep>,
}

impl ScenarioRegistry {
    /// Parses `{"scenarios":[{"name","steps":[...]}]}`.
    pub fn load(document: &str) -> Result<Self, ScenarioError> {
        let doc: RegistryDoc = serde_json::from_str(document)?;
        let mut reg = ScenarioRegistry::default();
        for s in doc.scenarios {
            if s.steps.is_empty() {
                return Err(ScenarioError::Empty(s.name));
            }
            reg.insert(Scenario {
                name: s.name,
                plan: TaskPlan {
                    steps: s.steps,
                    persist_trigger: None,
                },
            })?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, scenario: Scenario) -> Result<(), ScenarioError> {
        if self.get(&scenario.name).is_some() {
            return Err(ScenarioError::Duplicate(scenario.name));
        }
        self.scenarios.push(scenario);
        Ok(())
    }

    /// Case-insensitive lookup by exact name.
    pub fn get(&self, name: &str) -> Option<&Scenario> {
        let name = name.trim().to_lowercase();
        self.scenarios.iter().find(|s| s.name.to_lowercase() == name)
    }

    /// The registered scenario whose name occurs in `utterance`, ignoring
    /// case. The longest name wins when several occur.
    pub fn named_in(&self, utterance: &str) -> Option<&Scenario> {
        let text = utterance.to_lowercase();
        self.scenarios
            .iter()
            .filter(|s| text.contains(&s.name.to_lowercase()))
            .max_by_key(|s| s.name.len())
    }

    pub fn names(&self) -> Vec<&str> {
        self.scenarios.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scenario> {
        self.scenarios.iter()
    }
}
