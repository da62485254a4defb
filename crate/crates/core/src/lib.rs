//! Sequential sample-size determination for least-squares regression.
//!
//! The procedure keeps sampling until the estimated risk of the least-squares
//! coefficient vector is bounded by a user-set `b`, using a pilot sample,
//! `k`-at-a-time sequential steps up to a fraction `rho` of the projected
//! total, and one final top-up batch.

pub mod chisq;
pub mod engine;
pub mod ingest;
pub mod model;
pub mod montecarlo;
pub mod regression;

pub use chisq::{chi2_sf, eta, positive_part_excess, projected_overshoot, EtaValue};
pub use engine::{
    run_procedure, run_procedure_traced, run_procedure_with, DrawError, EngineError,
    ObservationSource, StoppingResult, TraceEntry, VarianceTracker,
};
pub use ingest::{open_csv_source, shifted_log, ColumnSpec, DataSchema, IngestError, Transform};
pub use model::{
    optimal_sample_size, theoretical_risk, validate_config, ConfigError, ConfigParams,
    ProcedureConfig,
};
pub use montecarlo::{run_study, seed_stream, ReplicationSummary, SimulationDesign};
pub use regression::{FitError, Observation, RegressionFit};
