//! Round-rotor synchronous generator with d-axis transient and subtransient
//! and q-axis subtransient fluxes, a first-order AVR and a droop governor.
//!
//! Machine quantities are in per unit on the machine rating; the network
//! side converts with `S_base / S_n`. The stator interface is a voltage
//! `E''` behind `R_s + jX''` with `X'' = (X_d'' + X_q'')/2`. The machine
//! frame is `d + jq = X·e^{-j(δ - π/2)}` for a network phasor `X`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgParams {
    pub s_n_mva: f64,
    pub v_n_kv: f64,
    pub xd: f64,
    pub xq: f64,
    pub xd_t: f64,
    pub xd_st: f64,
    pub xq_st: f64,
    pub xl: f64,
    pub rs: f64,
    pub td0_t: f64,
    pub td0_st: f64,
    pub tq0_st: f64,
    pub h: f64,
    #[serde(default)]
    pub d: f64,
}

impl SgParams {
    /// Generator data of the four-machine grid, by name `G0`..`G3`.
    pub fn table(name: &str) -> Result<Self> {
        let p = |s_n, xd, xq, xd_t, xd_st, xq_st, td0_t, td0_st, tq0_st, h| SgParams {
            s_n_mva: s_n,
            v_n_kv: 22.0,
            xd,
            xq,
            xd_t,
            xd_st,
            xq_st,
            xl: 0.15,
            rs: 0.01,
            td0_t,
            td0_st,
            tq0_st,
            h,
            d: 0.0,
        };
        Ok(match name {
            "G0" => p(1000.0, 2.00, 1.80, 0.35, 0.25, 0.30, 4.485, 0.068, 0.10, 6.0),
            "G1" => p(700.0, 1.25, 1.00, 0.333, 0.292, 0.292, 5.00, 0.002, 0.002, 5.0),
            "G2" => p(500.0, 1.667, 1.125, 0.25, 0.233, 0.225, 6.00, 0.002, 0.002, 3.0),
            "G3" => p(500.0, 1.25, 1.00, 0.333, 0.292, 0.292, 5.00, 0.002, 0.002, 5.0),
            _ => return Err(SimError::Config(format!("unknown generator data set `{name}`"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(format!("generator parameters: {m}")));
        if !(self.xd >= self.xd_t && self.xd_t >= self.xd_st && self.xd_st > self.xl && self.xl > 0.0) {
            return bad("requires X_d ≥ X_d' ≥ X_d'' > X_l > 0");
        }
        if !(self.xq >= self.xq_st && self.xq_st > 0.0) {
            return bad("requires X_q ≥ X_q'' > 0");
        }
        if !(self.td0_t > 0.0 && self.td0_st > 0.0 && self.tq0_st > 0.0 && self.h > 0.0) {
            return bad("time constants and inertia must be positive");
        }
        if self.rs < 0.0 || self.d < 0.0 || !(self.s_n_mva > 0.0) {
            return bad("R_s, D must be non-negative and S_n positive");
        }
        Ok(())
    }

    /// Interface reactance `X''`.
    pub fn x_st(&self) -> f64 {
        0.5 * (self.xd_st + self.xq_st)
    }

    /// Negative-sequence impedance in machine pu. The rotor sees the negative
    /// sequence at twice the nominal frequency; `X_2` is the harmonic mean of
    /// the d- and q-axis operational reactances there, which holds when the
    /// network lets the third-harmonic currents flow.
    pub fn negative_sequence_impedance(&self, f_nom: f64) -> Complex64 {
        let s = Complex64::new(0.0, 4.0 * std::f64::consts::PI * f_nom);
        let one = Complex64::new(1.0, 0.0);
        let gd = ((self.xd - self.xd_t) / (one + s * self.td0_t) + (self.xd_t - self.xd_st)) / (one + s * self.td0_st);
        let gq = (self.xq - self.xq_st) / (one + s * self.tq0_st);
        let xd = self.x_st() + gd;
        let xq = self.x_st() + gq;
        Complex64::new(self.rs, 0.0) + Complex64::i() * (2.0 * xd * xq / (xd + xq))
    }

    /// `(R_2, X_2)` in ohm for the given line-to-line base voltage.
    pub fn negative_sequence_si(&self, v_base_kv: f64, f_nom: f64) -> (f64, f64) {
        let zb = v_base_kv * v_base_kv / self.s_n_mva;
        let z = self.negative_sequence_impedance(f_nom) * zb;
        (z.re, z.im)
    }

    /// Stator `(R, L)` in ohm and henry for the given line-to-line base voltage.
    pub fn stator_rl_si(&self, v_base_kv: f64, f_nom: f64) -> (f64, f64) {
        let zb = v_base_kv * v_base_kv / self.s_n_mva;
        let w = 2.0 * std::f64::consts::PI * f_nom;
        (self.rs * zb, self.x_st() * zb / w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvrParams {
    pub k_a: f64,
    pub t_a: f64,
    /// Terminal-voltage measurement filter.
    pub t_r: f64,
    pub efd_min: f64,
    pub efd_max: f64,
}

impl Default for AvrParams {
    fn default() -> Self {
        Self {
            k_a: 50.0,
            t_a: 0.05,
            t_r: 0.02,
            efd_min: -4.0,
            efd_max: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovParams {
    /// Speed droop in pu (0.05 = 5 %).
    pub droop: f64,
    pub t_g: f64,
    pub p_max: f64,
}

impl Default for GovParams {
    fn default() -> Self {
        Self {
            droop: 0.05,
            t_g: 0.3,
            p_max: 1.2,
        }
    }
}

/// Dynamic states. `omega` is rotor speed in pu.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SgState {
    pub delta: f64,
    pub omega: f64,
    pub eq_t: f64,
    pub eq_st: f64,
    pub ed_st: f64,
    pub v_meas: f64,
    pub efd: f64,
    pub p_m: f64,
}

impl SgState {
    pub const LEN: usize = 8;

    pub fn to_array(&self) -> [f64; 8] {
        [self.delta, self.omega, self.eq_t, self.eq_st, self.ed_st, self.v_meas, self.efd, self.p_m]
    }

    pub fn from_array(x: [f64; 8]) -> Self {
        Self {
            delta: x[0],
            omega: x[1],
            eq_t: x[2],
            eq_st: x[3],
            ed_st: x[4],
            v_meas: x[5],
            efd: x[6],
            p_m: x[7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncMachine {
    pub params: SgParams,
    pub avr: AvrParams,
    pub gov: GovParams,
    pub state: SgState,
    pub v_ref: f64,
    pub p_ref: f64,
    pub omega_base: f64,
    /// `S_base / S_n`: multiplies system-pu currents into machine pu.
    pub to_machine: f64,
    pub connected: bool,
}

/// Electrical torque `Re(E'' I*)` in machine pu.
pub fn electrical_torque(ed_st: f64, eq_st: f64, i_d: f64, i_q: f64) -> f64 {
    ed_st * i_d + eq_st * i_q
}

impl SyncMachine {
    /// Steady-state initialization from a solved terminal voltage and power
    /// output, both given in system per unit.
    pub fn init(
        params: SgParams,
        avr: AvrParams,
        gov: GovParams,
        s_base_mva: f64,
        f_nom: f64,
        v_t: Complex64,
        s_out_sys: Complex64,
    ) -> Result<Self> {
        params.validate()?;
        let to_machine = s_base_mva / params.s_n_mva;
        let s = s_out_sys * to_machine;
        // peak-based per unit: S = V I*
        let i = (s / v_t).conj();
        let x_st = params.x_st();
        let x_eff = params.xq - params.xq_st + x_st;
        let delta = (v_t + Complex64::new(params.rs, x_eff) * i).arg();
        let rot = Complex64::from_polar(1.0, -(delta - FRAC_PI_2));
        let vdq = v_t * rot;
        let idq = i * rot;
        let (v_d, v_q, i_d, i_q) = (vdq.re, vdq.im, idq.re, idq.im);
        let ed_st = (params.xq - params.xq_st) * i_q;
        let eq_st = v_q + params.rs * i_q + x_st * i_d;
        let eq_t = eq_st + (params.xd_t - params.xd_st) * i_d;
        let efd = eq_t + (params.xd - params.xd_t) * i_d;
        let te = electrical_torque(ed_st, eq_st, i_d, i_q);
        let v_mag = v_t.norm();
        let state = SgState {
            delta,
            omega: 1.0,
            eq_t,
            eq_st,
            ed_st,
            v_meas: v_mag,
            efd,
            p_m: te,
        };
        let m = Self {
            params,
            avr,
            gov,
            state,
            v_ref: v_mag + efd / avr.k_a,
            p_ref: te,
            omega_base: 2.0 * std::f64::consts::PI * f_nom,
            to_machine,
            connected: true,
        };
        if !(efd > avr.efd_min && efd < avr.efd_max) {
            return Err(SimError::InitFailure(format!("field voltage {efd:.3} pu outside AVR limits")));
        }
        // the d-axis stator identity must close
        let v_d_check = ed_st - params.rs * i_d + x_st * i_q;
        let (dx, _) = m.derivatives(&m.state, i_d, i_q, v_mag);
        let worst = dx.to_array().iter().map(|v| v.abs()).fold((v_d - v_d_check).abs(), f64::max);
        if worst > 1e-6 {
            return Err(SimError::InitFailure(format!("residual derivative {worst:e} at t = 0")));
        }
        Ok(m)
    }

    /// State derivatives and electrical torque for given machine-frame currents
    /// (machine pu) and terminal voltage magnitude.
    pub fn derivatives(&self, x: &SgState, i_d: f64, i_q: f64, v_mag: f64) -> (SgState, f64) {
        let p = &self.params;
        let te = electrical_torque(x.ed_st, x.eq_st, i_d, i_q);
        let dw = x.omega - 1.0;
        let efd_cmd = self.avr.k_a * (self.v_ref - x.v_meas);
        let mut d_efd = (efd_cmd - x.efd) / self.avr.t_a;
        if (x.efd >= self.avr.efd_max && d_efd > 0.0) || (x.efd <= self.avr.efd_min && d_efd < 0.0) {
            d_efd = 0.0;
        }
        let p_cmd = self.p_ref - dw / self.gov.droop;
        let mut d_pm = (p_cmd - x.p_m) / self.gov.t_g;
        if (x.p_m >= self.gov.p_max && d_pm > 0.0) || (x.p_m <= 0.0 && d_pm < 0.0) {
            d_pm = 0.0;
        }
        let d = SgState {
            delta: self.omega_base * dw,
            omega: (x.p_m - te - p.d * dw) / (2.0 * p.h),
            eq_t: (x.efd - x.eq_t - (p.xd - p.xd_t) * i_d) / p.td0_t,
            eq_st: (x.eq_t - x.eq_st - (p.xd_t - p.xd_st) * i_d) / p.td0_st,
            ed_st: (-x.ed_st + (p.xq - p.xq_st) * i_q) / p.tq0_st,
            v_meas: (v_mag - x.v_meas) / self.avr.t_r,
            efd: d_efd,
            p_m: d_pm,
        };
        (d, te)
    }

    /// Subtransient EMF as a network phasor (pu voltage).
    pub fn emf_phasor(&self) -> Complex64 {
        Complex64::new(self.state.ed_st, self.state.eq_st) * Complex64::from_polar(1.0, self.state.delta - FRAC_PI_2)
    }

    /// EMF seen by a network that keeps stator transients. The transformer
    /// voltage of the subtransient flux is added so that a stator DC offset
    /// meets only `R_s + jX''` instead of exciting the damper equations.
    pub fn emf_phasor_transient(&self, i_d: f64, i_q: f64, v_mag: f64) -> Complex64 {
        if !self.connected {
            return self.emf_phasor();
        }
        let (dx, _) = self.derivatives(&self.state, i_d, i_q, v_mag);
        let e = Complex64::new(self.state.ed_st, self.state.eq_st)
            + Complex64::new(dx.ed_st, dx.eq_st) / Complex64::new(0.0, self.omega_base);
        e * Complex64::from_polar(1.0, self.state.delta - FRAC_PI_2)
    }

    /// Machine-frame `(i_d, i_q)` in machine pu from a system-pu current phasor.
    pub fn current_dq(&self, i_sys: Complex64) -> (f64, f64) {
        let z = i_sys * self.to_machine * Complex64::from_polar(1.0, -(self.state.delta - FRAC_PI_2));
        (z.re, z.im)
    }

    /// Stator impedance `R_s + jX''` on the system base.
    pub fn impedance_sys(&self) -> Complex64 {
        Complex64::new(self.params.rs, self.params.x_st()) * self.to_machine
    }


    /// One forward-Euler step. Returns the electrical torque at the start of the step.
    pub fn step(&mut self, i_d: f64, i_q: f64, v_mag: f64, t: f64, dt: f64) -> Result<f64> {
        let (dx, te) = self.derivatives(&self.state, i_d, i_q, v_mag);
        if !self.connected {
            return Ok(0.0);
        }
        let mut x = self.state.to_array();
        for (v, d) in x.iter_mut().zip(dx.to_array()) {
            *v += dt * d;
        }
        let mut next = SgState::from_array(x);
        next.efd = next.efd.clamp(self.avr.efd_min, self.avr.efd_max);
        next.p_m = next.p_m.clamp(0.0, self.gov.p_max);
        if !(0.8..=1.2).contains(&next.omega) || x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NumericalDivergence {
                t: t + dt,
                dt,
                detail: format!("generator speed {} pu", next.omega),
            });
        }
        self.state = next;
        Ok(te)
    }
}
