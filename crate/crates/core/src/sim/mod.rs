//! Deterministic closed-loop landing simulation and Monte Carlo experiments.

pub mod experiment;
pub mod outcome;
pub mod scenario;
pub mod trial;
pub mod world;

use thiserror::Error;

pub use experiment::{metrics_csv, run_experiment, ExperimentReport, MetricsRow, CSV_HEADER};
pub use outcome::{classify_outcome, Outcome};
pub use scenario::{
    builtin, Camera, DynamicAgent, Motion, Scenario, StaticObstacle, Tuning, SCHEMA_VERSION,
};
pub use trial::{
    run_trial, BackendKind, Mode, Pipeline, TraceRecord, TrialResult, TrialRun, Variant,
};
pub use world::{generate_caption, step_world, World};

/// Touchdown is counted within this height of the ground...
pub const TOUCHDOWN_HEIGHT: f64 = 0.02;
/// ...at or below this speed.
pub const TOUCHDOWN_SPEED: f64 = 0.2;
pub const SUCCESS_RADIUS: f64 = 0.5;
pub const CLOSE_CALL_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no initial plan: {0}")]
    ScenarioInfeasible(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Write a trace as JSON lines.
pub fn write_trace(path: &std::path::Path, trace: &[TraceRecord]) -> Result<(), SimError> {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, SimError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| SimError::MalformedTrace(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn read_trace(path: &std::path::Path) -> Result<Vec<TraceRecord>, SimError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(&text)
}
