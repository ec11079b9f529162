//! Evaluation: parameter sweeps with precision/recall/accuracy, closed-loop
//! detection and mitigation scenarios, and the rule-program equivalence
//! check.

pub mod equivalence;
pub mod metrics;
pub mod output;
pub mod scenario;
pub mod sweep;

pub use equivalence::{check_equivalence, EquivalenceReport, Mismatch};
pub use metrics::{mean_accuracy, Confusion, SweepResult};
pub use output::{
    emit_csv, emit_plot_data, plot_series, read_results_csv, summary_table, write_plot_data, write_results_csv,
    PlotSeries,
};
pub use scenario::{run_scenario, run_scenario_with, ScenarioConfig, ScenarioReport};
pub use sweep::{
    collect_sweep_data, evaluate, frame_indicators, AttackTemplate, FrameSeries, SweepData, SweepGrid, SweepOutcome,
};

use crate::detection::DetectionError;
use crate::kv::KvError;
use crate::mitigation::MitigationError;
use crate::traffic::TrafficError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Mitigation(#[from] MitigationError),
    #[error(transparent)]
    Flow(#[from] crate::flow::FlowError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{0}")]
    Parse(String),
}

impl HarnessError {
    /// Process exit code: 3 for I/O failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io(_) | HarnessError::Traffic(TrafficError::Io(_)) => 3,
            HarnessError::Csv(e) if e.is_io_error() => 3,
            _ => 2,
        }
    }
}
