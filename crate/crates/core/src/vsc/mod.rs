//! Grid-following voltage-source converter: parameters, gain tuning and the
//! five model variants (EMT average value and four phasor approximations).
//!
//! Controller quantities are SI peak values (V, A, W, var). Currents are
//! positive from the converter into the grid.

mod converter;

pub use converter::{Vsc, VscOutputs};

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VscModel {
    EmtAvg,
    PmFull,
    PmI1,
    PmI0,
    PmPq1,
}

impl VscModel {
    pub const ALL: [VscModel; 5] = [
        VscModel::EmtAvg,
        VscModel::PmFull,
        VscModel::PmI1,
        VscModel::PmI0,
        VscModel::PmPq1,
    ];
    pub const PHASOR: [VscModel; 4] = [VscModel::PmFull, VscModel::PmI1, VscModel::PmI0, VscModel::PmPq1];

    pub fn is_emt(self) -> bool {
        self == VscModel::EmtAvg
    }

    pub fn name(self) -> &'static str {
        match self {
            VscModel::EmtAvg => "emt-avg",
            VscModel::PmFull => "pm-full",
            VscModel::PmI1 => "pm-i1",
            VscModel::PmI0 => "pm-i0",
            VscModel::PmPq1 => "pm-pq1",
        }
    }
}

impl fmt::Display for VscModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VscModel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        VscModel::ALL
            .iter()
            .copied()
            .find(|m| m.name() == norm)
            .ok_or_else(|| SimError::Config(format!("unknown model `{s}` (expected one of emt-avg, pm-full, pm-i1, pm-i0, pm-pq1)")))
    }
}

/// Which voltage the phasor `I0`/`PQ1` models divide by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageGain {
    /// Nominal peak phase voltage.
    Static,
    /// Measured positive-sequence `v_q`.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VscParams {
    pub s_rated_mva: f64,
    /// Line-to-line RMS voltage at the point of connection.
    pub v_rated_kv: f64,
    pub f_nom: f64,
    pub r_ohm: f64,
    pub l_h: f64,
    pub omega_c: f64,
    pub omega_pq: f64,
    pub omega_pll: f64,
    /// MW per Hz.
    pub k_droop_f_mw_per_hz: f64,
    /// Reactive power per voltage deviation, both in per unit of the converter rating.
    pub k_droop_v_pu: f64,
    pub t_droop: f64,
    pub k_lvrt: f64,
    pub v_g_min: f64,
    pub i_lvrt_max: f64,
    pub i_max: f64,
    /// Unset: static for `pm-i0`, measured for `pm-pq1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voltage_gain: Option<VoltageGain>,
}

impl Default for VscParams {
    fn default() -> Self {
        Self::from_pu(100.0, 220.0, 50.0, 0.005, 0.15)
    }
}

impl VscParams {
    /// Defaults with the aggregate filter given in per unit of the converter rating.
    pub fn from_pu(s_mva: f64, v_kv: f64, f_nom: f64, r_pu: f64, l_pu: f64) -> Self {
        let zb = v_kv * v_kv / s_mva;
        let w = 2.0 * PI * f_nom;
        let omega_c = 1.0 / 1.18e-3;
        Self {
            s_rated_mva: s_mva,
            v_rated_kv: v_kv,
            f_nom,
            r_ohm: r_pu * zb,
            l_h: l_pu * zb / w,
            omega_c,
            omega_pq: omega_c / 10.0,
            omega_pll: 70.0,
            k_droop_f_mw_per_hz: 20.0,
            k_droop_v_pu: 10.0,
            t_droop: 0.1,
            k_lvrt: 2.0,
            v_g_min: 0.9,
            i_lvrt_max: 1.0,
            i_max: 1.1,
            voltage_gain: None,
        }
    }

    /// Peak phase-to-ground voltage.
    pub fn v_g_pk(&self) -> f64 {
        self.v_rated_kv * 1e3 * SQRT_2 / 3f64.sqrt()
    }

    /// Peak rated current (`S = 1.5 V I`).
    pub fn i_rated_pk(&self) -> f64 {
        self.s_rated_mva * 1e6 / (1.5 * self.v_g_pk())
    }

    pub fn s_rated(&self) -> f64 {
        self.s_rated_mva * 1e6
    }

    pub fn omega_nom(&self) -> f64 {
        2.0 * PI * self.f_nom
    }

    /// Droop gains in SI: W/Hz and var/V.
    pub fn droop_gains_si(&self) -> (f64, f64) {
        (
            self.k_droop_f_mw_per_hz * 1e6,
            self.k_droop_v_pu * self.s_rated() / self.v_g_pk(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Config(format!("converter parameters: {m}")));
        for (name, v) in [
            ("s_rated_mva", self.s_rated_mva),
            ("v_rated_kv", self.v_rated_kv),
            ("f_nom", self.f_nom),
            ("r_ohm", self.r_ohm),
            ("l_h", self.l_h),
            ("omega_c", self.omega_c),
            ("omega_pq", self.omega_pq),
            ("omega_pll", self.omega_pll),
            ("t_droop", self.t_droop),
            ("k_lvrt", self.k_lvrt),
            ("v_g_min", self.v_g_min),
            ("i_lvrt_max", self.i_lvrt_max),
            ("i_max", self.i_max),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.k_droop_f_mw_per_hz < 0.0 || self.k_droop_v_pu < 0.0 {
            return bad("droop gains must be non-negative".into());
        }
        if self.omega_pq >= self.omega_c {
            return bad(format!(
                "outer bandwidth {} rad/s must be below inner bandwidth {} rad/s",
                self.omega_pq, self.omega_c
            ));
        }
        if self.i_lvrt_max > self.i_max {
            return bad("i_lvrt_max must not exceed i_max".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VscGains {
    pub zeta_pll: f64,
    pub k_p_pll: f64,
    pub tau_i_pll: f64,
    pub k_p_c: f64,
    pub tau_i_c: f64,
    pub k_p_pq: f64,
    pub tau_i_pq: f64,
    pub tau_c: f64,
    pub tau_pq: f64,
}

pub fn tune_gains(p: &VscParams) -> VscGains {
    let zeta_pll = FRAC_1_SQRT_2;
    let v_pk = p.v_g_pk();
    let tau_i_pq = 1.0 / p.omega_c;
    VscGains {
        zeta_pll,
        k_p_pll: 2.0 * zeta_pll * p.omega_pll / v_pk,
        tau_i_pll: 2.0 * zeta_pll / p.omega_pll,
        k_p_c: p.l_h * p.omega_c,
        tau_i_c: p.l_h / p.r_ohm,
        k_p_pq: tau_i_pq * p.omega_pq * 2.0 / (3.0 * v_pk),
        tau_i_pq,
        tau_c: 1.0 / p.omega_c,
        tau_pq: 1.0 / p.omega_pq,
    }
}

/// Reactive current reference in pu of rated current while the voltage is low.
pub fn lvrt_current_ref(v_q_pu: f64, p: &VscParams) -> f64 {
    if v_q_pu >= p.v_g_min {
        0.0
    } else {
        (p.k_lvrt * (p.v_g_min - v_q_pu)).min(p.i_lvrt_max)
    }
}

/// Apply the converter current limit to `(i_q, i_d)`. With `d_priority` the
/// d-axis keeps its value up to the limit and q gets what remains; otherwise
/// the vector is scaled down. Returns the limited pair and whether it bound.
pub fn limit_current(i_q: f64, i_d: f64, i_max: f64, d_priority: bool) -> (f64, f64, bool) {
    let mag = i_q.hypot(i_d);
    if mag <= i_max {
        return (i_q, i_d, false);
    }
    if d_priority {
        let d = i_d.clamp(-i_max, i_max);
        let room = (i_max * i_max - d * d).max(0.0).sqrt();
        (i_q.clamp(-room, room), d, true)
    } else {
        let k = i_max / mag;
        (i_q * k, i_d * k, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VscFeatures {
    pub droops: bool,
    pub lvrt: bool,
    pub neg_seq: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gains_follow_tuning_rules() {
        let mut p = VscParams::default();
        p.l_h = 0.01;
        p.r_ohm = 0.1;
        let g = tune_gains(&p);
        assert!((g.zeta_pll - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((g.tau_i_c - 0.1).abs() < 1e-15);
        assert!((p.omega_c - 847.457627).abs() < 1e-5);
        assert!((g.k_p_c - 0.01 * p.omega_c).abs() < 1e-12);
        assert!((g.tau_c - 1.18e-3).abs() < 1e-15);
    }

    #[test]
    fn lvrt_characteristic() {
        let p = VscParams::default();
        assert_eq!(lvrt_current_ref(1.0, &p), 0.0);
        assert!((lvrt_current_ref(0.5, &p) - 0.8).abs() < 1e-12);
        assert_eq!(lvrt_current_ref(0.0, &p), 1.0);
    }

    #[test]
    fn current_limit_policies() {
        assert_eq!(limit_current(0.3, 0.4, 1.0, false), (0.3, 0.4, false));
        let (q, d, hit) = limit_current(3.0, 4.0, 1.0, false);
        assert!(hit && (q - 0.6).abs() < 1e-12 && (d - 0.8).abs() < 1e-12);
        let (q, d, _) = limit_current(1.0, 0.8, 1.0, true);
        assert!((d - 0.8).abs() < 1e-12 && (q - 0.6).abs() < 1e-12);
        let (q, d, _) = limit_current(1.0, 1.5, 1.0, true);
        assert_eq!((q, d), (0.0, 1.0));
    }

    #[test]
    fn model_names_parse() {
        for m in VscModel::ALL {
            assert_eq!(m.name().parse::<VscModel>().unwrap(), m);
        }
        assert_eq!("PM_I0".parse::<VscModel>().unwrap(), VscModel::PmI0);
        assert!("pm-i2".parse::<VscModel>().is_err());
    }

    #[test]
    fn parameter_checks() {
        let mut p = VscParams::default();
        p.validate().unwrap();
        p.omega_pq = p.omega_c * 2.0;
        assert!(p.validate().is_err());
        let mut p = VscParams::default();
        p.i_lvrt_max = 2.0;
        assert!(p.validate().is_err());
    }
}
