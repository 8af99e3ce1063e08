//! Pipeline overhead measurement: wall time per message minus time spent
//! inside the backend.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::agent::ScenarioRegistry;
use crate::eval::{EvalCase, Stimulus};
use crate::home::HomeState;
use crate::llm::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse};
use crate::runtime::Assistant;

/// Wraps a backend and accumulates the time spent in it.
pub struct TimedBackend<B> {
    inner: B,
    spent_ns: Arc<AtomicU64>,
}

impl<B: CompletionBackend> TimedBackend<B> {
    pub fn new(inner: B) -> (Self, Arc<AtomicU64>) {
        let spent = Arc::new(AtomicU64::new(0));
        (
            TimedBackend {
                inner,
                spent_ns: spent.clone(),
            },
            spent,
        )
    }
}

impl<B: CompletionBackend> CompletionBackend for TimedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let start = Instant::now();
        let out = self.inner.complete(request);
        self.spent_ns
            .fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverheadStats {
    pub samples: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[Duration], p: f64) -> Duration {
    if samples.is_empty() {
        return Duration::ZERO;
    }
    let mut sorted = samples.to_vec();
    sorted.sort();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Handles every case `rounds` times, each on a fresh assistant, and reports
/// per-message overhead.
pub fn measure_overhead(
    cases: &[EvalCase],
    home: &HomeState,
    scenarios: &ScenarioRegistry,
    backend: impl Fn() -> Box<dyn CompletionBackend>,
    rounds: usize,
) -> OverheadStats {
    let mut samples = Vec::with_capacity(cases.len() * rounds);
    for _ in 0..rounds {
        for case in cases {
            let (timed, spent) = TimedBackend::new(backend());
            let mut a = Assistant::new(home.clone(), scenarios.clone(), timed);
            let start = Instant::now();
            match &case.stimulus {
                Stimulus::Utterance(text) => {
                    a.handle_utterance(text);
                }
                Stimulus::Sensor { sensor_id, value } => {
                    let _ = a.handle_sensor(sensor_id, value);
                }
            }
            let total = start.elapsed();
            let in_backend = Duration::from_nanos(spent.load(Ordering::Relaxed));
            samples.push(total.saturating_sub(in_backend));
        }
    }
    let ms = |d: Duration| d.as_secs_f64() * 1000.0;
    OverheadStats {
        samples: samples.len(),
        p50_ms: ms(percentile(&samples, 50.0)),
        p95_ms: ms(percentile(&samples, 95.0)),
        max_ms: ms(samples.iter().copied().max().unwrap_or_default()),
    }
}
