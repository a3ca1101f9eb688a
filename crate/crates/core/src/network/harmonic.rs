//! Harmonic current source.
//!
//! Each order `h` injects `m_h · I_1 · cos(hωt + hφ_1 - h·2πk/3)` into phase
//! `k`, where `I_1` and `φ_1` are the peak magnitude and angle of a reference
//! fundamental current. In phasor mode the same waveform is represented by
//! a set of nominal-frequency phasors rotating at `(h - 1)ω`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::frames::ComplexPhasorSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub orders: Vec<u32>,
    /// Magnitudes in percent of the reference fundamental current.
    pub magnitudes_pct: Vec<f64>,
    /// Reference fundamental current, peak per unit.
    pub i_ref_pu: f64,
    /// Angle of the reference fundamental current at t = 0 (rad).
    #[serde(default)]
    pub phi_ref: f64,
}

impl HarmonicSpec {
    pub fn validate(&self) -> Result<()> {
        if self.orders.len() != self.magnitudes_pct.len() {
            return Err(SimError::Config("harmonic orders and magnitudes differ in length".into()));
        }
        if self.orders.iter().any(|&h| h < 2) {
            return Err(SimError::Config("harmonic orders must be at least 2".into()));
        }
        Ok(())
    }

    /// Reference current drawn by a load of `p`, `q` (per unit on the system base) at 1 pu voltage.
    pub fn reference_from_load(p_pu: f64, q_pu: f64) -> (f64, f64) {
        let s = Complex64::new(p_pu, q_pu);
        // peak-based per unit: S = V I*, V = 1 pu at angle 0
        let i = s.conj();
        (i.norm(), i.arg())
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.orders
            .iter()
            .zip(&self.magnitudes_pct)
            .map(|(&h, &m)| (h as f64, m / 100.0 * self.i_ref_pu))
    }

    /// Instantaneous injected current per phase (per unit).
    pub fn waveform(&self, omega: f64, t: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (h, amp) in self.components() {
            for (k, o) in out.iter_mut().enumerate() {
                *o += amp * (h * (omega * t + self.phi_ref) - h * 2.0 * PI * k as f64 / 3.0).cos();
            }
        }
        out
    }

    /// Nominal-frequency phasors whose real projection reproduces [`Self::waveform`].
    pub fn phasors(&self, omega: f64, t: f64) -> ComplexPhasorSet {
        let mut out = [Complex64::default(); 3];
        for (h, amp) in self.components() {
            for (k, o) in out.iter_mut().enumerate() {
                let ang = (h - 1.0) * omega * t + h * self.phi_ref - h * 2.0 * PI * k as f64 / 3.0;
                *o += Complex64::from_polar(amp, ang);
            }
        }
        ComplexPhasorSet::from_array(out)
    }
}
