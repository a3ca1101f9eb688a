//! Accuracy and cost evaluation of the converter models against the EMT
//! reference: RMSE, time-step and bandwidth sweeps, benchmarks and the
//! time-step guideline.

pub mod fourier;
mod report;
mod sweep;

pub use report::{
    benchmark, execution_benchmark, guideline_report, knee_dt, model_time_constant, BenchRow, Benchmark,
    GuidelineEntry, GuidelineReport, KNEE_FACTOR,
};
pub use sweep::{
    bandwidth_sweep, default_dt_grid, default_signals, timestep_sweep, Bandwidth, SweepPoint, SweepResult, SweepSpec,
    NAMED_STEPS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scenarios::RunResult;

/// Normalized RMSE reported for divergent runs.
pub const DEFAULT_RMSE_CAP: f64 = 10.0;

/// Reference time step.
pub const REFERENCE_DT: f64 = 5e-6;

/// Sample `x_src(t_src)` at every `t_dst` by zero-order hold. Times before
/// the first source sample take the first value.
pub fn resample_zoh(t_src: &[f64], x_src: &[f64], t_dst: &[f64]) -> Vec<f64> {
    assert_eq!(t_src.len(), x_src.len());
    if x_src.is_empty() {
        return vec![f64::NAN; t_dst.len()];
    }
    let mut k = 0;
    t_dst
        .iter()
        .map(|&t| {
            let tol = 1e-9 * t.abs().max(1e-6);
            while k + 1 < t_src.len() && t_src[k + 1] <= t + tol {
                k += 1;
            }
            x_src[k]
        })
        .collect()
}

/// Plain RMSE between equal-length series, divided by `base`.
pub fn rmse(reference: &[f64], candidate: &[f64], base: f64) -> Result<f64> {
    if reference.is_empty() || reference.len() != candidate.len() {
        return Err(SimError::EmptyWindow);
    }
    if !(base > 0.0) {
        return Err(SimError::Config(format!("normalization base must be positive, got {base}")));
    }
    let n = reference.len() as f64;
    let ss: f64 = reference.iter().zip(candidate).map(|(r, c)| (r - c) * (r - c)).sum();
    Ok((ss / n).sqrt() / base)
}

/// RMSE of a candidate series against a reference on the reference
/// timebase, restricted to `window` and to the overlap of both series.
pub fn rmse_resampled(
    t_ref: &[f64],
    x_ref: &[f64],
    t_cand: &[f64],
    x_cand: &[f64],
    base: f64,
    window: Option<(f64, f64)>,
) -> Result<f64> {
    let (lo, hi) = overlap(t_ref, t_cand, window).ok_or(SimError::EmptyWindow)?;
    let a = t_ref.partition_point(|&t| t < lo - 1e-12);
    let b = t_ref.partition_point(|&t| t <= hi + 1e-12);
    if a >= b {
        return Err(SimError::EmptyWindow);
    }
    let c = resample_zoh(t_cand, x_cand, &t_ref[a..b]);
    rmse(&x_ref[a..b], &c, base)
}

fn overlap(t_ref: &[f64], t_cand: &[f64], window: Option<(f64, f64)>) -> Option<(f64, f64)> {
    let mut lo = t_ref.first()?.max(*t_cand.first()?);
    let mut hi = t_ref.last()?.min(*t_cand.last()?);
    if let Some((w0, w1)) = window {
        lo = lo.max(w0);
        hi = hi.min(w1);
    }
    (lo <= hi).then_some((lo, hi))
}

/// What to compare between two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub signal: String,
    /// Defaults to the reference run's rated base for the signal.
    #[serde(default)]
    pub base: Option<f64>,
    /// Defaults to the full overlap.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
}

impl ComparisonSpec {
    pub fn new(signal: &str) -> Self {
        Self {
            signal: signal.into(),
            base: None,
            window: None,
        }
    }

    pub fn with_window(mut self, t0: f64, t1: f64) -> Self {
        self.window = Some((t0, t1));
        self
    }
}

/// Normalized RMSE of `candidate` against `reference`.
pub fn compare(reference: &RunResult, candidate: &RunResult, spec: &ComparisonSpec) -> Result<f64> {
    let base = spec.base.unwrap_or_else(|| reference.base(&spec.signal));
    rmse_resampled(
        &reference.time,
        reference.signal(&spec.signal)?,
        &candidate.time,
        candidate.signal(&spec.signal)?,
        base,
        spec.window,
    )
}

/// Whether two runs cover different time spans (a comparison is then clipped).
pub fn spans_differ(a: &RunResult, b: &RunResult) -> bool {
    let end = |r: &RunResult| r.time.last().copied().unwrap_or(0.0);
    let start = |r: &RunResult| r.time.first().copied().unwrap_or(0.0);
    let tol = a.record_dt().max(b.record_dt());
    (end(a) - end(b)).abs() > tol || (start(a) - start(b)).abs() > tol
}
