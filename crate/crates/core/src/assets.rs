//! Data files compiled into the binary.

use crate::agent::ScenarioRegistry;
use crate::eval::{load_corpus, EvalCase};
use crate::home::{load_home, HomeState};
use crate::llm::{load_fixture, ScriptedFixture};

pub const HOME_JSON: &str = include_str!("../assets/home.json");
pub const SCENARIOS_JSON: &str = include_str!("../assets/scenarios.json");

pub fn bundled_home() -> HomeState {
    load_home(HOME_JSON).expect("bundled home template is valid")
}

pub fn bundled_scenarios() -> ScenarioRegistry {
    ScenarioRegistry::load(SCENARIOS_JSON).expect("bundled scenarios are valid")
}

pub const CORPUS_JSON: &str = include_str!("../assets/corpus.json");
pub const HARMONY_FIXTURE: &str = include_str!("../assets/fixtures/harmony.json");
pub const DEGRADED_FIXTURE: &str = include_str!("../assets/fixtures/degraded.json");
pub const SESSION_FIXTURE: &str = include_str!("../assets/fixtures/session.json");
pub const SESSION_SCRIPT: &str = include_str!("../assets/session.script");

pub fn bundled_corpus() -> Vec<EvalCase> {
    load_corpus(CORPUS_JSON, &bundled_home()).expect("bundled corpus is valid")
}

pub fn fixture(document: &str) -> ScriptedFixture {
    load_fixture(document).expect("bundled fixtures are valid")
}
