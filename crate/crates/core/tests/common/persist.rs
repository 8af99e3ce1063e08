//! Random rules and memory entries, and the round-trip checks shared by the
//! persistence tests and the acceptance run.

use std::fs;
use std::path::Path;

use harmony_core::memory::{CorruptRecord, MemoryKind, MemoryStore, MEMORY_FILE, RULES_FILE};
use harmony_core::{TaskPlan, TriggerPredicate};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const WORDS: &[&str] = &[
    "light", "warm", "bedroom", "22", "degrees", "é", "日本", "\"quoted\"", "back\\slash", "new\nline", "tab\t", "",
];

fn text(rng: &mut impl Rng) -> String {
    let n = rng.random_range(0..8);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

const OPS: [&str; 4] = ["eq", "gt", "lt", "changed_to"];
const CAPS: [&str; 4] = ["power", "brightness", "temperature", "mode"];

fn value(rng: &mut impl Rng) -> Value {
    match rng.random_range(0..6) {
        0 => json!(rng.random_bool(0.5)),
        1 => json!(rng.random_range(-1000i64..1000)),
        2 => json!(rng.random_range(-1e6..1e6)),
        3 => json!(text(rng)),
        4 => Value::Null,
        _ => json!([rng.random_range(0..9), text(rng)]),
    }
}

fn trigger(rng: &mut impl Rng, depth: usize) -> Value {
    let sensors = ["en_motion", "lr_temp", "ba_humidity", "en_door"];
    match rng.random_range(0..if depth == 0 { 2 } else { 4 }) {
        0 => json!({
            "sensor": sensors.choose(rng).unwrap(),
            "op": *OPS.choose(rng).unwrap(),
            "value": value(rng),
        }),
        1 => json!({"clock_at": rng.random_range(1..500u64)}),
        2 => json!({"all": (0..rng.random_range(0..3)).map(|_| trigger(rng, depth - 1)).collect::<Vec<_>>()}),
        _ => json!({"any": (0..rng.random_range(0..3)).map(|_| trigger(rng, depth - 1)).collect::<Vec<_>>()}),
    }
}

fn plan(rng: &mut impl Rng) -> Value {
    let steps: Vec<Value> = (0..rng.random_range(0..4))
        .map(|_| {
            let mut s = json!({
                "capability": *CAPS.choose(rng).unwrap(),
                "value": value(rng),
                "rationale": text(rng),
            });
            s["device"] = if rng.random_bool(0.5) {
                json!(*["lr_light_1", "light", "kitchen light"].choose(rng).unwrap())
            } else {
                json!({"kind": "light", "room": "bedroom"})
            };
            if rng.random_bool(0.3) {
                s["room"] = json!("living_room");
            }
            s
        })
        .collect();
    json!({"steps": steps})
}

pub fn random_rule(rng: &mut impl Rng) -> (TriggerPredicate, TaskPlan) {
    let t = serde_json::from_value(trigger(rng, 3)).expect("generated trigger parses");
    let p = serde_json::from_value(plan(rng)).expect("generated plan parses");
    (t, p)
}

fn kind(rng: &mut impl Rng) -> MemoryKind {
    *[MemoryKind::Observation, MemoryKind::Summary, MemoryKind::PreferenceNote].choose(rng).unwrap()
}

/// Saves `n_rules` rules (deleting some along the way) and `n_entries`
/// entries, reopens the directory and compares.
pub fn roundtrip(dir: &Path, seed: u64, n_rules: usize, n_entries: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = MemoryStore::open(dir).map_err(|e| e.to_string())?;
    let mut saved = 0;
    while saved < n_rules {
        let (t, p) = random_rule(&mut rng);
        store.save_rule(t, p, rng.random_range(0..10_000)).map_err(|e| e.to_string())?;
        saved += 1;
        if rng.random_bool(0.1) {
            let ids: Vec<u64> = store.rules().map(|r| r.id).collect();
            let id = *ids.choose(&mut rng).unwrap();
            store.delete_rule(id).map_err(|e| e.to_string())?;
        }
    }
    for i in 0..n_entries {
        let k = kind(&mut rng);
        store
            .append_long_term(k, &text(&mut rng), &format!("c{}", i % 17))
            .map_err(|e| e.to_string())?;
    }
    let reopened = MemoryStore::open(dir).map_err(|e| e.to_string())?;
    if !reopened.corrupt_records().is_empty() {
        return Err(format!("clean files reported corrupt: {:?}", reopened.corrupt_records()));
    }
    let before: Vec<_> = store.rules().cloned().collect();
    let after: Vec<_> = reopened.rules().cloned().collect();
    if before != after {
        return Err("rules differ after reopening".into());
    }
    if store.long_term() != reopened.long_term() {
        return Err("memory entries differ after reopening".into());
    }
    Ok(())
}

const CORRUPT: &[&[u8]] = &[
    b"not json at all",
    b"{\"kind\":\"observation\",\"text\":\"torn",
    b"{\"kind\":\"mystery\",\"text\":\"x\",\"clock\":1,\"conversation_id\":\"c1\"}",
    b"{\"kind\":\"summary\",\"text\":\"x\",\"clock\":1,\"conversation_id\":\"c1\",\"extra\":true}",
    b"{\"op\":\"explode\",\"id\":3}",
    b"[1,2,3]",
    b"\xff\xfe\x00garbage",
    b"null",
];

/// Interleaves corrupt lines into freshly written files and checks that
/// exactly those lines are skipped and everything else loads.
pub fn corrupt_lines(dir: &Path, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = MemoryStore::open(dir).map_err(|e| e.to_string())?;
    for _ in 0..30 {
        let (t, p) = random_rule(&mut rng);
        store.save_rule(t, p, 0).map_err(|e| e.to_string())?;
    }
    for _ in 0..200 {
        let k = kind(&mut rng);
        store.append_long_term(k, &text(&mut rng), "c1").map_err(|e| e.to_string())?;
    }
    let mut expected = Vec::new();
    for file in [MEMORY_FILE, RULES_FILE] {
        let path = dir.join(file);
        let original = fs::read(&path).map_err(|e| e.to_string())?;
        let mut out: Vec<u8> = Vec::new();
        let mut line = 0;
        for record in original.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
            if rng.random_bool(0.15) {
                out.extend_from_slice(CORRUPT.choose(&mut rng).unwrap());
                out.push(b'\n');
                line += 1;
                expected.push(CorruptRecord { file: file.to_string(), line });
            }
            out.extend_from_slice(record);
            out.push(b'\n');
            line += 1;
        }
        // A torn final record, as a crash mid-write would leave it.
        out.extend_from_slice(b"{\"op\":\"save\",\"rule\":{\"id\":9");
        line += 1;
        expected.push(CorruptRecord { file: file.to_string(), line });
        fs::write(&path, out).map_err(|e| e.to_string())?;
    }
    let reopened = MemoryStore::open(dir).map_err(|e| e.to_string())?;
    if reopened.corrupt_records() != expected.as_slice() {
        return Err(format!(
            "skipped {:?}, injected {:?}",
            reopened.corrupt_records(),
            expected
        ));
    }
    if store.long_term() != reopened.long_term() {
        return Err("valid memory entries were lost".into());
    }
    let before: Vec<_> = store.rules().cloned().collect();
    let after: Vec<_> = reopened.rules().cloned().collect();
    if before != after {
        return Err("valid rules were lost".into());
    }
    Ok(())
}
