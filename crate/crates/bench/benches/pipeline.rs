use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use harmony_core::assets;
use harmony_core::controller::extract_json;
use harmony_core::eval::{run_corpus, score, ScoreMode};
use harmony_core::llm::{CompletionBackend, ScriptedBackend};
use harmony_core::Assistant;

fn extraction(c: &mut Criterion) {
    let answer = "Here you go:\n```json\n[{'room': 'living_room', 'device': 'lr_light_1', 'action': 'power', 'value': true,},]\n```\nHope that helps.";
    c.bench_function("extract_json/fenced_with_repairs", |b| b.iter(|| extract_json(black_box(answer))));
}

fn one_message(c: &mut Criterion) {
    let home = assets::bundled_home();
    let scenarios = assets::bundled_scenarios();
    let fixture = assets::fixture(assets::HARMONY_FIXTURE);
    c.bench_function("assistant/turn_on_the_light", |b| {
        b.iter_batched(
            || Assistant::new(home.clone(), scenarios.clone(), ScriptedBackend::new(fixture.clone())),
            |mut a| a.handle_utterance("Turn on the light for me"),
            criterion::BatchSize::SmallInput,
        )
    });
    c.bench_function("assistant/scenario_morning_routine", |b| {
        b.iter_batched(
            || Assistant::new(home.clone(), scenarios.clone(), ScriptedBackend::new(fixture.clone())),
            |mut a| a.run_scenario("Morning Routine"),
            criterion::BatchSize::SmallInput,
        )
    });
}

fn corpus(c: &mut Criterion) {
    let home = assets::bundled_home();
    let scenarios = assets::bundled_scenarios();
    let cases = assets::bundled_corpus();
    let fixture = assets::fixture(assets::HARMONY_FIXTURE);
    let factory = || Box::new(ScriptedBackend::new(fixture.clone())) as Box<dyn CompletionBackend>;
    let mut g = c.benchmark_group("eval");
    g.sample_size(20);
    g.bench_function("run_corpus/harmony", |b| b.iter(|| run_corpus(&cases, &home, &scenarios, factory)));
    let results = run_corpus(&cases, &home, &scenarios, factory);
    g.bench_function("score/executed", |b| {
        b.iter(|| score(&cases, black_box(&results), &home, ScoreMode::Executed))
    });
    g.finish();
}

criterion_group!(benches, extraction, one_message, corpus);
criterion_main!(benches);
