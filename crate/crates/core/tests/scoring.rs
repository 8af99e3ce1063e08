mod common;

use common::oracle;
use harmony_core::assets;
use harmony_core::eval::{run_corpus, score, CaseResult, EvalMetrics, ScoreMode};
use harmony_core::llm::{CompletionBackend, ScriptedBackend};
use harmony_core::DeviceCommand;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn docs() -> (Value, Value) {
    (
        serde_json::from_str(assets::CORPUS_JSON).unwrap(),
        serde_json::from_str(assets::HOME_JSON).unwrap(),
    )
}

fn run(fixture: &str) -> Vec<CaseResult> {
    let fx = assets::fixture(fixture);
    run_corpus(&assets::bundled_corpus(), &assets::bundled_home(), &assets::bundled_scenarios(), || {
        Box::new(ScriptedBackend::new(fx.clone())) as Box<dyn CompletionBackend>
    })
}

fn as_json(cmds: &[DeviceCommand]) -> Vec<Value> {
    cmds.iter().map(|c| serde_json::to_value(c).unwrap()).collect()
}

fn oracle_for(results: &[CaseResult], mode: ScoreMode) -> oracle::Counts {
    let (corpus, home) = docs();
    let pairs: Vec<(String, Vec<Value>)> = results
        .iter()
        .map(|r| {
            let cmds = match mode {
                ScoreMode::Executed => &r.executed,
                ScoreMode::Proposed => &r.candidates,
            };
            (r.case_id.clone(), as_json(cmds))
        })
        .collect();
    oracle::score(&corpus, &home, &pairs)
}

fn assert_agrees(m: &EvalMetrics, o: &oracle::Counts) {
    assert_eq!(
        (m.n_cases, m.device_fp_count, m.room_fp_count, m.fn_count, m.fp_cases, m.fn_cases, m.correct_cases),
        (o.n, o.device_fp, o.room_fp, o.fn_count, o.fp_cases, o.fn_cases, o.ok_cases)
    );
    assert_eq!((m.fp_rate, m.fn_rate, m.accuracy), o.rates());
}

#[test]
fn library_scorer_matches_reference_on_bundled_fixtures() {
    let home = assets::bundled_home();
    let cases = assets::bundled_corpus();
    for fixture in [assets::HARMONY_FIXTURE, assets::DEGRADED_FIXTURE] {
        let results = run(fixture);
        for mode in [ScoreMode::Executed, ScoreMode::Proposed] {
            let m = score(&cases, &results, &home, mode).unwrap();
            assert_agrees(&m, &oracle_for(&results, mode));
        }
    }
}

#[test]
fn library_scorer_matches_reference_on_random_result_sets() {
    let (corpus, home_doc) = docs();
    let idx = oracle::index_home(&home_doc);
    let home = assets::bundled_home();
    let cases = assets::bundled_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let results: Vec<CaseResult> = corpus["cases"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| {
                let parse = |v: Vec<Value>| v.into_iter().map(|x| serde_json::from_value(x).unwrap()).collect();
                CaseResult {
                    case_id: c["id"].as_str().unwrap().to_string(),
                    executed: parse(oracle::random_commands(&mut rng, &idx, c)),
                    candidates: parse(oracle::random_commands(&mut rng, &idx, c)),
                    records: vec![],
                    error: None,
                }
            })
            .collect();
        for mode in [ScoreMode::Executed, ScoreMode::Proposed] {
            let m = score(&cases, &results, &home, mode).unwrap();
            assert_agrees(&m, &oracle_for(&results, mode));
            assert!(m.accuracy >= 1.0 - m.fp_rate - m.fn_rate - 1e-12);
            let erroneous = results.len() - m.correct_cases;
            assert!((m.accuracy + erroneous as f64 / m.n_cases as f64 - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn case_order_does_not_change_case_results() {
    let fx = assets::fixture(assets::DEGRADED_FIXTURE);
    let home = assets::bundled_home();
    let scen = assets::bundled_scenarios();
    let mut cases = assets::bundled_corpus();
    let backend = || Box::new(ScriptedBackend::new(fx.clone())) as Box<dyn CompletionBackend>;
    let forward = run_corpus(&cases, &home, &scen, backend);
    cases.reverse();
    let mut backward = run_corpus(&cases, &home, &scen, backend);
    backward.reverse();
    assert_eq!(forward, backward);
}

#[test]
fn repeated_runs_are_identical() {
    assert_eq!(run(assets::HARMONY_FIXTURE), run(assets::HARMONY_FIXTURE));
}

#[test]
fn deferred_and_ambiguous_cases_execute_under_harmony() {
    let results = run(assets::HARMONY_FIXTURE);
    let by_id = |id: &str| results.iter().find(|r| r.case_id == id).unwrap();
    // Door opening is deferred, then handled after the reply.
    assert_eq!(by_id("c24").executed.len(), 1);
    // "All living room lights": one hallucinated compile answer, then both lights.
    let c17 = by_id("c17");
    assert_eq!(c17.executed.len(), 2);
    assert!(c17.candidates.iter().any(|c| c.device == "lr_light_3"));
    // Ignored humidity blip and a stated preference emit nothing.
    assert!(by_id("c22").executed.is_empty());
    assert!(by_id("c19").executed.is_empty());
}
