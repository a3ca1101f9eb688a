//! Fundamental-frequency phasors from recorded waveforms.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::frames::{fortescue, ComplexPhasorSet};
use crate::scenarios::RunResult;

/// Single-cycle DFT at `f` over the last full cycle ending at `t_end`.
/// Returns the peak phasor `X` with `x(t) ≈ Re(X e^{jωt})`.
pub fn fundamental_phasor(t: &[f64], x: &[f64], f: f64, t_end: f64) -> Result<Complex64> {
    if t.len() < 2 || t.len() != x.len() {
        return Err(SimError::EmptyWindow);
    }
    let dt = t[1] - t[0];
    let n = (1.0 / (f * dt)).round() as usize;
    let end = t.partition_point(|&s| s <= t_end + 1e-12);
    if n < 4 || end < n {
        return Err(SimError::EmptyWindow);
    }
    let w = 2.0 * PI * f;
    let sum: Complex64 = (end - n..end).map(|k| x[k] * Complex64::from_polar(1.0, -w * t[k])).sum();
    Ok(sum * (2.0 / n as f64))
}

/// Phase voltage phasors of `bus` over the cycle ending at `t_end`.
pub fn bus_phasors(run: &RunResult, bus: &str, f: f64, t_end: f64) -> Result<ComplexPhasorSet> {
    let mut out = [Complex64::default(); 3];
    for (k, ph) in ["Va", "Vb", "Vc"].iter().enumerate() {
        out[k] = fundamental_phasor(&run.time, run.signal(&format!("{bus}.{ph}"))?, f, t_end)?;
    }
    Ok(ComplexPhasorSet::from_array(out))
}

/// Positive-sequence voltage phasor of `bus`.
pub fn bus_positive_sequence(run: &RunResult, bus: &str, f: f64, t_end: f64) -> Result<Complex64> {
    Ok(fortescue(&bus_phasors(run, bus, f, t_end)?).0)
}
