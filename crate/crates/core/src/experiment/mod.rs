//! Scenario configuration, replicated runs, sweeps and result files.

mod config;
mod output;
mod run;
mod study;
mod sweep;

pub use config::{DemandConfig, DriverConfig, DriverOverride, NetworkConfig, ScenarioConfig};
pub use output::{
    config_hash, fmt_value, read_records_csv, rerun, rerun_dir, write_controller_csv, write_records_csv,
    write_study_results, write_sweep_results, Manifest, RecordRow, Rerun, StudyKind, MANIFEST,
};
pub use run::{arrivals, initial_world, run_scenario, run_scenario_observed, vehicle_traits, RunCounts, RunResult};
pub use study::{run_access_fraction_study, FractionRow, FractionStudy, SpeedProfile, SPEED_BIN_M};
pub use sweep::{parse_grid, run_sweep, RunOptions, RunSummary, SweepCell, SweepResults, SweepSpec};
