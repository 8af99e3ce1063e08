//! Whole-pipeline checks shared by the property tests and the acceptance run.

use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use harmony_core::assets;
use harmony_core::controller::check_command;
use harmony_core::eval::Stimulus;
use harmony_core::llm::ScriptedBackend;
use harmony_core::{Assistant, EventKind, Interaction};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::garbage::GarbageBackend;

fn check_interaction(a: &Assistant, i: &Interaction, applied: usize) -> Result<(), String> {
    for c in &i.commands {
        if let Err(r) = check_command(c, a.home()) {
            return Err(format!("executed invalid command {c}: {r:?}"));
        }
    }
    if applied != i.commands.len() {
        return Err(format!("{applied} state changes for {} commands", i.commands.len()));
    }
    Ok(())
}

/// One fuzz trial: a handful of utterances, sensor readings and scenario
/// runs against a backend answering with noise. Every command that reaches
/// the home must validate, and each one must produce exactly one state change.
pub fn soundness_trial(seed: u64) -> Result<usize, String> {
    let home = assets::bundled_home();
    let backend = GarbageBackend::new(seed, &home);
    let mut a = Assistant::new(home, assets::bundled_scenarios(), backend);
    let changes = Arc::new(Mutex::new(0usize));
    let counter = changes.clone();
    a.subscribe(move |r| {
        if r.kind == EventKind::StateChange {
            *counter.lock().unwrap() += 1;
        }
    });
    let utterances: Vec<String> = assets::bundled_corpus()
        .into_iter()
        .filter_map(|c| match c.stimulus {
            Stimulus::Utterance(t) => Some(t),
            Stimulus::Sensor { .. } => None,
        })
        .collect();
    let sensors: Vec<String> = a.home().sensors.keys().cloned().collect();
    let scenarios = ["Morning Routine", "Returning Home", "Hosting a Party", "Nope"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut executed = 0;
    for _ in 0..rng.random_range(1..5) {
        let before = *changes.lock().unwrap();
        let i = match rng.random_range(0..4) {
            0 | 1 => a.handle_utterance(utterances.choose(&mut rng).unwrap()),
            2 => {
                let id = sensors.choose(&mut rng).unwrap().clone();
                let v = match rng.random_range(0..3) {
                    0 => json!(rng.random_bool(0.5)),
                    1 => json!(rng.random_range(0.0..100.0)),
                    _ => json!("garbage"),
                };
                match a.handle_sensor(&id, &v) {
                    Ok(i) => i,
                    Err(_) => continue,
                }
            }
            _ => match a.run_scenario(scenarios.choose(&mut rng).unwrap()) {
                Some(i) => i,
                None => continue,
            },
        };
        let applied = *changes.lock().unwrap() - before;
        check_interaction(&a, &i, applied)?;
        executed += i.commands.len();
    }
    Ok(executed)
}

/// Stores the Returning Home plan as a rule on entrance motion, injects the
/// motion event and returns the resulting decision log. Fails if nothing
/// executes or the log holds a user utterance.
pub fn proactive_run(dir: &Path) -> Result<String, String> {
    let fixture = assets::fixture(assets::SESSION_FIXTURE);
    let mut a = Assistant::open(
        assets::bundled_home(),
        assets::bundled_scenarios(),
        ScriptedBackend::new(fixture),
        dir,
    )
    .map_err(|e| e.to_string())?;
    let plan = a
        .scenarios()
        .get("Returning Home")
        .ok_or("no Returning Home scenario")?
        .plan
        .clone();
    let trigger = serde_json::from_value(json!({"sensor": "en_motion", "op": "changed_to", "value": true}))
        .map_err(|e| e.to_string())?;
    a.memory_mut().save_rule(trigger, plan, 0).map_err(|e| e.to_string())?;
    let i = a.handle_sensor("en_motion", &Value::Bool(true)).map_err(|e| e.to_string())?;
    if i.commands.is_empty() {
        return Err(format!("nothing executed; reply was {:?}", i.reply));
    }
    let log_path = a.log_path().ok_or("no log")?.to_path_buf();
    drop(a);
    let log = fs::read_to_string(&log_path).map_err(|e| e.to_string())?;
    let mut saw_rule = false;
    for line in log.lines() {
        let r: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if r["kind"] == "utterance_in" {
            return Err("decision log contains a user utterance".into());
        }
        if r["kind"] == "decision" && r["payload"]["source"] == "rule" {
            saw_rule = true;
        }
    }
    if !saw_rule {
        return Err("no rule decision in the log".into());
    }
    Ok(log)
}
