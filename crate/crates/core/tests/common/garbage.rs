//! A backend that answers every stage with noise: random bytes, truncated
//! JSON, and well-formed answers naming devices, rooms and values at random.

use std::sync::Mutex;

use harmony_core::llm::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse, Stage};
use harmony_core::HomeState;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub struct GarbageBackend {
    rng: Mutex<ChaCha8Rng>,
    devices: Vec<String>,
    rooms: Vec<String>,
    actions: Vec<String>,
}

impl GarbageBackend {
    pub fn new(seed: u64, home: &HomeState) -> Self {
        let mut actions: Vec<String> = home
            .devices
            .values()
            .flat_map(|d| d.capabilities.keys().cloned())
            .collect();
        actions.sort();
        actions.dedup();
        actions.push("explode".into());
        let mut devices: Vec<String> = home.devices.keys().cloned().collect();
        devices.extend(["ghost_lamp", "lr_light_9", "kitchen_tv", "light", "tv"].map(String::from));
        let mut rooms: Vec<String> = home.rooms.keys().cloned().collect();
        rooms.extend(["attic", "garage", "Living Room"].map(String::from));
        GarbageBackend {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            devices,
            rooms,
            actions,
        }
    }

    fn value(&self, rng: &mut ChaCha8Rng) -> Value {
        match rng.random_range(0..7) {
            0 => json!(true),
            1 => json!(false),
            2 => json!(rng.random_range(-50..300)),
            3 => json!(rng.random_range(-10.0..60.0)),
            4 => json!(["cool", "heat", "strong", "turbo", "purple"].choose(rng).unwrap()),
            5 => Value::Null,
            _ => json!({"nested": [1, 2]}),
        }
    }

    fn step(&self, rng: &mut ChaCha8Rng) -> Value {
        let mut s = json!({
            "device": self.devices.choose(rng).unwrap(),
            "capability": self.actions.choose(rng).unwrap(),
            "value": self.value(rng),
            "rationale": "noise",
        });
        if rng.random_bool(0.5) {
            s["room"] = json!(self.rooms.choose(rng).unwrap());
        }
        s
    }

    fn command(&self, rng: &mut ChaCha8Rng) -> Value {
        let mut c = json!({
            "room": self.rooms.choose(rng).unwrap(),
            "device": self.devices.choose(rng).unwrap(),
            "action": self.actions.choose(rng).unwrap(),
            "value": self.value(rng),
        });
        if rng.random_bool(0.1) {
            c["extra"] = json!(1);
        }
        c
    }

    fn text(&self, stage: Stage, rng: &mut ChaCha8Rng) -> String {
        let style = rng.random_range(0..10);
        match style {
            0 => {
                let bytes: Vec<u8> = (0..rng.random_range(0..80)).map(|_| rng.random()).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            1 => "{\"decision\": \"execute_plan\", \"steps\": [".to_string(),
            2 => format!(
                "Interpretation: ?\nAction: {}",
                ["IMMEDIATE", "DEFERRED", "IGNORE", "MAYBE"].choose(rng).unwrap()
            ),
            _ => match stage {
                Stage::Classify => format!(
                    "Interpretation: noise\nActivity: noise\nAction: {}",
                    ["IMMEDIATE", "DEFERRED", "IGNORE"].choose(rng).unwrap()
                ),
                Stage::Compile => {
                    let n = rng.random_range(0..4);
                    let cmds: Vec<Value> = (0..n).map(|_| self.command(rng)).collect();
                    format!("```json\n{}\n```", Value::Array(cmds))
                }
                Stage::Summarize => "noise".to_string(),
                _ => {
                    let n = rng.random_range(0..4);
                    let steps: Vec<Value> = (0..n).map(|_| self.step(rng)).collect();
                    let d = match rng.random_range(0..5) {
                        0 => json!({"decision": "store_rule",
                                    "trigger": {"sensor": "en_motion", "op": "changed_to", "value": true},
                                    "steps": steps}),
                        1 => json!({"decision": "run_scenario", "name": "Nope"}),
                        _ => json!({"decision": "execute_plan", "steps": steps}),
                    };
                    format!("Interpretation: noise\nAction: {d}")
                }
            },
        }
    }
}

impl CompletionBackend for GarbageBackend {
    fn id(&self) -> &str {
        "garbage"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let mut rng = self.rng.lock().unwrap();
        if rng.random_bool(0.05) {
            return Err(BackendError::Transport("noise".into()));
        }
        Ok(CompletionResponse {
            text: self.text(request.stage, &mut rng),
            backend_id: "garbage".into(),
            latency_ms: 0,
        })
    }
}
