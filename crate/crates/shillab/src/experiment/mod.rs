//! Experiment orchestration: declarative config in, full pipeline out,
//! with resumable stage checkpoints and grid search.

pub mod config;
pub mod grid;
pub mod report;
pub mod runner;

pub use config::{apply_axis, grid_cells, ExperimentConfig, GridAxis};
pub use grid::{run_grid, GridSummary};
pub use report::{DatasetSummary, MethodReport, RunReport, VictimReport};
pub use runner::{run_experiment, run_experiment_in};
