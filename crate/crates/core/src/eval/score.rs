use serde::Serialize;
use thiserror::Error;

use super::corpus::EvalCase;
use super::CaseResult;
use crate::command::DeviceCommand;
use crate::home::HomeState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Commands that reached the home.
    Executed,
    /// Every command proposed before validation.
    Proposed,
}

impl std::str::FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "executed" => Ok(ScoreMode::Executed),
            "proposed" => Ok(ScoreMode::Proposed),
            other => Err(format!("unknown mode {other:?}: expected executed or proposed")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CaseScore {
    pub device_fp: usize,
    pub room_fp: usize,
    pub fn_count: usize,
}

impl CaseScore {
    pub fn has_fp(&self) -> bool {
        self.device_fp + self.room_fp > 0
    }

    pub fn has_fn(&self) -> bool {
        self.fn_count > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub n_cases: usize,
    pub device_fp_count: usize,
    pub room_fp_count: usize,
    pub fn_count: usize,
    pub fp_cases: usize,
    pub fn_cases: usize,
    pub correct_cases: usize,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("nothing to score")]
    EmptyResults,
    #[error("result for case {0} has no matching corpus case")]
    UnknownCase(String),
}

/// Greedy matching: commands in emission order, each against the first
/// unused required signature, then against any allowed signature.
pub fn score_case(case: &EvalCase, commands: &[DeviceCommand], home: &HomeState) -> CaseScore {
    let mut used = vec![false; case.required.len()];
    let mut score = CaseScore::default();
    for cmd in commands {
        if let Some(j) = (0..case.required.len()).find(|&j| !used[j] && case.required[j].matches(cmd, home)) {
            used[j] = true;
            continue;
        }
        if case.allowed.iter().any(|sig| sig.matches(cmd, home)) {
            continue;
        }
        match home.devices.get(&cmd.device) {
            Some(d) if d.room_id != cmd.room => score.room_fp += 1,
            _ => score.device_fp += 1,
        }
    }
    score.fn_count = used.iter().filter(|u| !**u).count();
    score
}

pub fn score(
    cases: &[EvalCase],
    results: &[CaseResult],
    home: &HomeState,
    mode: ScoreMode,
) -> Result<EvalMetrics, ScoreError> {
    if results.is_empty() {
        return Err(ScoreError::EmptyResults);
    }
    let mut scores = Vec::with_capacity(results.len());
    for r in results {
        let case = cases
            .iter()
            .find(|c| c.id == r.case_id)
            .ok_or_else(|| ScoreError::UnknownCase(r.case_id.clone()))?;
        let commands = match mode {
            ScoreMode::Executed => &r.executed,
            ScoreMode::Proposed => &r.candidates,
        };
        scores.push(score_case(case, commands, home));
    }
    Ok(metrics(&scores))
}

pub fn metrics(scores: &[CaseScore]) -> EvalMetrics {
    let n = scores.len();
    let fp_cases = scores.iter().filter(|s| s.has_fp()).count();
    let fn_cases = scores.iter().filter(|s| s.has_fn()).count();
    let correct_cases = scores.iter().filter(|s| !s.has_fp() && !s.has_fn()).count();
    let rate = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    EvalMetrics {
        n_cases: n,
        device_fp_count: scores.iter().map(|s| s.device_fp).sum(),
        room_fp_count: scores.iter().map(|s| s.room_fp).sum(),
        fn_count: scores.iter().map(|s| s.fn_count).sum(),
        fp_cases,
        fn_cases,
        correct_cases,
        fp_rate: rate(fp_cases),
        fn_rate: rate(fn_cases),
        accuracy: rate(correct_cases),
    }
}
