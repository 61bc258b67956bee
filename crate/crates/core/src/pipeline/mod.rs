//! Data ingest, scenarios, persistence and the end-to-end planning study.

mod case_study;
mod forecast;
mod ingest;
mod scenario;
pub mod store;

pub use case_study::{
    baseline_futures, case_study_graph, filter_propagations, fit_case_study, fit_dlms, run_case_study, scenario_rows,
    CaseStudyConfig, CaseStudyData, CaseStudyModels, CaseStudyRun, EnsembleConfig, COST_NODE, ELEC_NODE,
    ELEC_REGRESSORS, GAS_NODE, GAS_REGRESSORS, HEAT_NODE, PARAMS,
};
pub use forecast::{read_rows_csv, rows_for_step, scenario_propagation, step_labels, write_rows_csv, ForecastRow, StepKind};
pub use ingest::{ingest, ingest_path, Quarter, QuarterSeries, Schema, VOLUME_SCALE};
pub use scenario::{apply_scenario, carry_forward, Scenario, ScenarioInputs};
pub use store::{DocumentKind, GraphDocument, ModelStore};
