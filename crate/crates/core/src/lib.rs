//! Bidirectional lane-free highway model with internal-boundary capacity
//! sharing: scenario loading, cell-transmission simulation, demand
//! projection, QP assembly, solution analysis and export.

pub mod analysis;
pub mod ctm;
pub mod error;
pub mod export;
pub mod holding_back;
pub mod oracle;
pub mod projection;
pub mod qp_build;
pub mod scenario;

pub use analysis::{compare, optimize, run_variant, AnalysisReport, ReportRow, RunOptions, VariantRun};
pub use ctm::{simulate, simulate_no_control, SharingPlan, TrafficTrajectory};
pub use error::{Error, Result, ScenarioError};
pub use holding_back::{detect_holding_back, HoldingBackReport};
pub use oracle::{grid_oracle, GridResult};
pub use projection::{project_demands, ProjectedDemands};
pub use qp_build::{build_qp, extract_solution, QpProblem, VarIndexMap};
pub use scenario::{builtin, load_scenario_file, load_scenario_str, Direction, Scenario};
