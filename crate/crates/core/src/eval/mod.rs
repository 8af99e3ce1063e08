//! Routine-corpus evaluation: runs every case through a fresh pipeline and
//! scores the commands against ground-truth signatures.

mod corpus;
mod score;

use serde::Serialize;

pub use corpus::{load_corpus, CommandSignature, CorpusError, EvalCase, Stimulus, ValuePred};
pub use score::{metrics, score, score_case, CaseScore, EvalMetrics, ScoreError, ScoreMode};

use crate::agent::ScenarioRegistry;
use crate::command::DeviceCommand;
use crate::events::EventRecord;
use crate::home::HomeState;
use crate::llm::CompletionBackend;
use crate::runtime::Assistant;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub case_id: String,
    pub executed: Vec<DeviceCommand>,
    pub candidates: Vec<DeviceCommand>,
    pub records: Vec<EventRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs one case against a fresh copy of `home` with empty memories. A
/// stimulus the home rejects is recorded as an error with nothing emitted.
pub fn run_case(
    case: &EvalCase,
    home: &HomeState,
    scenarios: &ScenarioRegistry,
    backend: Box<dyn CompletionBackend>,
) -> CaseResult {
    let mut assistant = Assistant::new(home.clone(), scenarios.clone(), backend);
    let outcome = match &case.stimulus {
        Stimulus::Utterance(text) => Ok(assistant.handle_utterance(text)),
        Stimulus::Sensor { sensor_id, value } => assistant.handle_sensor(sensor_id, value),
    };
    match outcome {
        Ok(i) => CaseResult {
            case_id: case.id.clone(),
            executed: i.commands,
            candidates: i.candidates,
            records: i.records,
            error: None,
        },
        Err(e) => CaseResult {
            case_id: case.id.clone(),
            executed: Vec::new(),
            candidates: Vec::new(),
            records: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Runs every case in order, building a new backend for each one.
pub fn run_corpus(
    cases: &[EvalCase],
    home: &HomeState,
    scenarios: &ScenarioRegistry,
    backend: impl Fn() -> Box<dyn CompletionBackend>,
) -> Vec<CaseResult> {
    cases
        .iter()
        .map(|c| run_case(c, home, scenarios, backend()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format {other:?}: expected table or csv")),
        }
    }
}

pub const CSV_HEADER: &str = "fp_rate,fn_rate,accuracy";

pub fn report(m: &EvalMetrics, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => format!(
            "{CSV_HEADER}\n{:.2},{:.2},{:.2}\n",
            m.fp_rate, m.fn_rate, m.accuracy
        ),
        ReportFormat::Table => {
            let mut s = format!("cases: {}\n\n", m.n_cases);
            s.push_str(&format!(
                "{:<16}{:<16}{}\n",
                "False Positive", "False Negative", "Accuracy"
            ));
            s.push_str(&format!(
                "{:<16}{:<16}{:.2}\n\n",
                format!("{:.2}", m.fp_rate),
                format!("{:.2}", m.fn_rate),
                m.accuracy
            ));
            s.push_str(&format!("{:<11}{:<9}{}\n", "Device FP", "Room FP", "FN"));
            s.push_str(&format!(
                "{:<11}{:<9}{}\n",
                m.device_fp_count, m.room_fp_count, m.fn_count
            ));
            s
        }
    }
}
