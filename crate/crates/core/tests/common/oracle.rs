//! Reference scorer working on raw JSON documents only: the home file, the
//! corpus file and command lists. Nothing from the library is used.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

pub struct HomeIndex {
    pub room_of: HashMap<String, String>,
    pub kind_of: HashMap<String, String>,
    pub caps_of: HashMap<String, Vec<String>>,
    pub rooms: Vec<String>,
}

pub fn index_home(home_doc: &Value) -> HomeIndex {
    let mut idx = HomeIndex {
        room_of: HashMap::new(),
        kind_of: HashMap::new(),
        caps_of: HashMap::new(),
        rooms: Vec::new(),
    };
    for room in home_doc["rooms"].as_array().unwrap() {
        let rid = room["id"].as_str().unwrap().to_string();
        idx.rooms.push(rid.clone());
        for d in room["devices"].as_array().unwrap() {
            let id = d["id"].as_str().unwrap().to_string();
            let r = d.get("room_id").and_then(Value::as_str).map(str::to_string).unwrap_or(rid.clone());
            idx.room_of.insert(id.clone(), r);
            idx.kind_of.insert(id.clone(), d["kind"].as_str().unwrap().to_string());
            let caps = d["capabilities"].as_object().unwrap().keys().cloned().collect();
            idx.caps_of.insert(id, caps);
        }
    }
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub n: usize,
    pub device_fp: usize,
    pub room_fp: usize,
    pub fn_count: usize,
    pub fp_cases: usize,
    pub fn_cases: usize,
    pub ok_cases: usize,
}

impl Counts {
    pub fn rates(&self) -> (f64, f64, f64) {
        let n = self.n as f64;
        (self.fp_cases as f64 / n, self.fn_cases as f64 / n, self.ok_cases as f64 / n)
    }
}

fn value_ok(pred: Option<&Value>, v: &Value) -> bool {
    let Some(p) = pred else { return true };
    if p == "any" {
        return true;
    }
    if let Some(x) = p.get("eq") {
        if x.is_number() && v.is_number() {
            return x.as_f64().unwrap() == v.as_f64().unwrap();
        }
        return x == v;
    }
    if let Some(x) = p.get("ge") {
        return v.is_number() && v.as_f64().unwrap() >= x.as_f64().unwrap();
    }
    if let Some(x) = p.get("le") {
        return v.is_number() && v.as_f64().unwrap() <= x.as_f64().unwrap();
    }
    panic!("unknown predicate {p}");
}

fn sig_ok(sig: &Value, cmd: &Value, h: &HomeIndex) -> bool {
    let device = cmd["device"].as_str().unwrap();
    let room = cmd["room"].as_str().unwrap();
    let Some(actual_room) = h.room_of.get(device) else { return false };
    if actual_room != room {
        return false;
    }
    let sroom = sig["room"].as_str().unwrap();
    if sroom != "*" && sroom != room {
        return false;
    }
    let sdev = sig["device"].as_str().unwrap();
    if let Some(kind) = sdev.strip_prefix("kind:") {
        if h.kind_of[device] != kind {
            return false;
        }
    } else if sdev != device {
        return false;
    }
    sig["action"] == cmd["action"] && value_ok(sig.get("value"), &cmd["value"])
}

/// `results` pairs a case id with the command objects to score for it.
pub fn score(corpus: &Value, home_doc: &Value, results: &[(String, Vec<Value>)]) -> Counts {
    let h = index_home(home_doc);
    let cases = corpus["cases"].as_array().unwrap();
    let mut c = Counts { n: results.len(), ..Counts::default() };
    for (id, cmds) in results {
        let case = cases.iter().find(|k| k["id"] == id.as_str()).unwrap();
        let empty = vec![];
        let req = case.get("required").and_then(Value::as_array).unwrap_or(&empty);
        let allowed = case.get("allowed").and_then(Value::as_array).unwrap_or(&empty);
        let mut used = vec![false; req.len()];
        let (mut dfp, mut rfp) = (0, 0);
        for cmd in cmds {
            let mut hit = false;
            for j in 0..req.len() {
                if !used[j] && sig_ok(&req[j], cmd, &h) {
                    used[j] = true;
                    hit = true;
                    break;
                }
            }
            if !hit {
                for a in allowed {
                    if sig_ok(a, cmd, &h) {
                        hit = true;
                        break;
                    }
                }
            }
            if !hit {
                let device = cmd["device"].as_str().unwrap();
                match h.room_of.get(device) {
                    Some(r) if r != cmd["room"].as_str().unwrap() => rfp += 1,
                    _ => dfp += 1,
                }
            }
        }
        let fns = used.iter().filter(|u| !**u).count();
        c.device_fp += dfp;
        c.room_fp += rfp;
        c.fn_count += fns;
        if dfp + rfp > 0 {
            c.fp_cases += 1;
        }
        if fns > 0 {
            c.fn_cases += 1;
        }
        if dfp + rfp == 0 && fns == 0 {
            c.ok_cases += 1;
        }
    }
    c
}

/// A random command list for one case: real devices in right and wrong
/// rooms, ghosts, and values that may or may not satisfy signatures.
pub fn random_commands(rng: &mut impl Rng, h: &HomeIndex, case: &Value) -> Vec<Value> {
    let mut devices: Vec<&String> = h.room_of.keys().collect();
    devices.sort();
    let n = rng.random_range(0..5);
    let mut out = Vec::new();
    for _ in 0..n {
        // Half the time start from a required signature so matches happen.
        let from_sig = case["required"].as_array().filter(|r| !r.is_empty()).filter(|_| rng.random_bool(0.5));
        let (device, action) = match from_sig {
            Some(req) => {
                let sig = req.choose(rng).unwrap();
                let d = sig["device"].as_str().unwrap();
                let device = match d.strip_prefix("kind:") {
                    Some(kind) => {
                        let of_kind: Vec<&&String> = devices.iter().filter(|d| h.kind_of[**d] == kind).collect();
                        (**of_kind.choose(rng).unwrap()).clone()
                    }
                    None => d.to_string(),
                };
                (device, sig["action"].as_str().unwrap().to_string())
            }
            None if rng.random_bool(0.2) => (format!("ghost_{}", rng.random_range(0..4)), "power".to_string()),
            None => {
                let d = (*devices.choose(rng).unwrap()).clone();
                let a = h.caps_of[&d].choose(rng).unwrap().clone();
                (d, a)
            }
        };
        let room = match h.room_of.get(&device) {
            Some(r) if rng.random_bool(0.85) => r.clone(),
            _ => h.rooms.choose(rng).unwrap().clone(),
        };
        let value = match rng.random_range(0..6) {
            0 => json!(true),
            1 => json!(false),
            2 => json!(rng.random_range(0..=100)),
            3 => json!(rng.random_range(15.0..30.0)),
            4 => json!(["cool", "strong", "heat"].choose(rng).unwrap()),
            _ => json!(22),
        };
        out.push(json!({"room": room, "device": device, "action": action, "value": value}));
    }
    out
}
