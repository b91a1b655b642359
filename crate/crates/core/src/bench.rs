//! Cost measurements for a streaming fit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::online::{fit_stream, EmConfig, FitReport, StepOutcome};
use crate::source::{CountingSource, SampleSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub samples_per_second: f64,
    pub retained_state_bytes: usize,
    pub passes_over_data: u64,
    pub wall_time_s: f64,
    /// Peak bytes seen by a tracking allocator, when one is installed.
    pub peak_tracked_alloc_bytes: Option<u64>,
    pub samples: u64,
    pub steps: u64,
}

/// Runs [`fit_stream`] behind a counting wrapper and times it. Passes are
/// the rows pulled from the source divided by the rows the fit reports
/// seeing, rounded up.
pub fn bench_fit<S: SampleSource>(
    source: S,
    config: &EmConfig,
    progress: impl FnMut(&StepOutcome),
) -> Result<(FitReport, BenchReport)> {
    let mut counting = CountingSource::new(source);
    let start = Instant::now();
    let report = fit_stream(&mut counting, config, progress)?;
    let wall = start.elapsed().as_secs_f64();
    let bench = BenchReport {
        samples_per_second: report.samples_seen as f64 / wall.max(1e-9),
        retained_state_bytes: report.retained_state_bytes,
        passes_over_data: counting.passes(report.samples_seen),
        wall_time_s: wall,
        peak_tracked_alloc_bytes: None,
        samples: report.samples_seen,
        steps: report.steps,
    };
    Ok((report, bench))
}
