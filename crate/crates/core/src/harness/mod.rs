//! Seeded repetitions, metric collection, aggregation and plots.

mod aggregate;
mod config;
mod metrics;
mod plot;
mod run;

use std::path::Path;

pub use aggregate::{crossing, samples_to_delta, series, Crossing, Series, SeriesPoint, Summary, TableEntry};
pub use config::{Checkpoints, ExperimentConfig, InstanceSpec};
pub use metrics::{
    read_metrics, read_metrics_file, write_errors, write_metrics, write_metrics_file, ErrorRow, MetricRow,
};
pub use plot::emit_plots;
pub use run::{
    confidence_of, run_experiment, run_repetition, worker_count, RepetitionSpec, ResultStore, RunMetadata,
    StepObserver, THREADS_ENV,
};

use crate::error::Result;

/// Writes `metrics.csv`, `errors.csv`, `summary.json` and the plots under
/// `out_dir`, returning the summary.
pub fn write_results(store: &ResultStore, out_dir: &Path) -> Result<Summary> {
    std::fs::create_dir_all(out_dir)?;
    write_metrics_file(&out_dir.join("metrics.csv"), &store.rows)?;
    write_errors(std::fs::File::create(out_dir.join("errors.csv"))?, &store.errors)?;
    let summary = Summary::new(&store.metadata, &store.rows, store.errors.len());
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    if store.rows.is_empty() {
        log::warn!("no rows recorded; skipping plots");
    } else {
        emit_plots(&store.rows, &out_dir.join("plots"))?;
    }
    Ok(summary)
}
