//! Experiment drivers, configuration and report output.

mod config;
mod experiments;
pub mod gradcheck;
mod report;

pub use config::{ExperimentConfig, Variant};
pub use experiments::{
    build_pools, clonalg_demo_params, clonalg_demo_pattern, clonalg_history_csv, evaluation_set, load_mnist,
    mean_test_error_by_epoch, run_clonalg_demo, run_epoch_curve, run_size_sweep, run_two_class_application, train_variant, ScoreSummary,
    TrainedRun, TwoClassReport,
};
pub use report::{emit_csv, emit_svg_lineplot, results_to_csv, sweep_plot, LinePlot, SweepResult, XAxis, SWEEP_HEADER};

/// Writes `text` to `path`, creating parent directories.
pub fn write_output(path: &std::path::Path, text: &str) -> crate::Result<()> {
    report::write_file(path, text)
}
