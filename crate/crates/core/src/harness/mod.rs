//! Experiment driver behind the `speclab` binary.

mod config;
mod devices;
mod report;
mod suite;

/// Individual invariant checks, each runnable on its own.
pub mod suite_checks {
    pub use super::suite::{
        check_decode_invariants, check_emission_equivalence, check_greedy_identity,
        check_monte_carlo_equivalence, check_pipeline_equivalence, chi_square, ANALYTIC_TOLERANCE,
        CHI_SQUARE_ALPHA,
    };
}
mod sweep;

pub use config::{DecodeSpec, DeviceRef, ExperimentConfig, PipelineRef};
pub use devices::{
    compare_devices, DeviceEntry, DeviceRatio, DeviceReport, RateSource, PIPELINE_DEVICE,
};
pub use report::{emit_report, load_report, render_csv, render_json, ReportFormat};
pub use suite::{verify_suite, CheckResult, SuiteOptions, SuiteSummary};
pub use sweep::{run_sweep, SweepMetadata, SweepReport, SweepRow, VerifyUnitSummary};
