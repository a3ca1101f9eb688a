//! Balanced positive-sequence power flow used to initialize dynamic runs.
//!
//! Lines are nominal pi sections, loads are constant impedance at their
//! rated voltage, and converters enter as fixed P/Q injections. Values are in
//! per unit on the topology base with `S = V · I*`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::network::{SwitchState, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusSpec {
    pub kind: BusType,
    /// Voltage magnitude setpoint for slack and PV buses.
    pub v_set: f64,
    /// Net scheduled injection. For PV buses only the real part is enforced.
    pub s_inj: Complex64,
}

impl BusSpec {
    pub fn pq() -> Self {
        Self {
            kind: BusType::Pq,
            v_set: 1.0,
            s_inj: Complex64::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v: Vec<Complex64>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl PowerFlowSolution {
    /// Complex power leaving the network at each bus (`V · conj(Y V)`).
    pub fn injections(&self, y: &DMatrix<Complex64>) -> Vec<Complex64> {
        let v = DVector::from_column_slice(&self.v);
        let i = y * &v;
        v.iter().zip(i.iter()).map(|(v, i)| v * i.conj()).collect()
    }
}

/// Positive-sequence bus admittance matrix for the given switch state.
/// Faults are ignored; a line counts as closed only when all three poles are.
pub fn admittance(topo: &Topology, sw: &SwitchState) -> Result<DMatrix<Complex64>> {
    let base = topo.base();
    let zb = base.z_base();
    let w = base.omega_nom();
    let n = topo.buses.len();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for (k, line) in topo.lines.iter().enumerate() {
        if !sw.line_closed[k].iter().all(|&c| c) {
            continue;
        }
        let p = line.params.unwrap_or(topo.line_defaults);
        let z = Complex64::new(p.r1_ohm_per_km, w * p.l1_h_per_km) * (line.length_km / zb);
        let ysh = Complex64::new(0.0, w * p.c1_f_per_km * line.length_km * zb / 2.0);
        let f = topo.bus_index(&line.from)?;
        let t = topo.bus_index(&line.to)?;
        let ys = z.inv();
        y[(f, f)] += ys + ysh;
        y[(t, t)] += ys + ysh;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
    }
    let sb = topo.s_base_mva;
    for (k, load) in topo.loads.iter().enumerate() {
        if sw.load_on[k] {
            let b = topo.bus_index(&load.bus)?;
            y[(b, b)] += Complex64::new(load.p_mw / sb, -load.q_mvar / sb);
        }
    }
    Ok(y)
}

fn mismatch(y: &DMatrix<Complex64>, specs: &[BusSpec], v: &[Complex64]) -> Vec<f64> {
    let vv = DVector::from_column_slice(v);
    let i = y * &vv;
    let mut out = Vec::with_capacity(2 * v.len());
    for (k, s) in specs.iter().enumerate() {
        let calc = v[k] * i[k].conj();
        match s.kind {
            BusType::Slack => {}
            BusType::Pv => out.push(s.s_inj.re - calc.re),
            BusType::Pq => {
                out.push(s.s_inj.re - calc.re);
                out.push(s.s_inj.im - calc.im);
            }
        }
    }
    out
}

fn check_specs(y: &DMatrix<Complex64>, specs: &[BusSpec]) -> Result<()> {
    if y.nrows() != specs.len() {
        return Err(SimError::Config(format!(
            "power flow: {} bus specs for {} buses",
            specs.len(),
            y.nrows()
        )));
    }
    if specs.iter().filter(|s| s.kind == BusType::Slack).count() != 1 {
        return Err(SimError::Config("power flow needs exactly one slack bus".into()));
    }
    Ok(())
}

fn flat_start(specs: &[BusSpec]) -> Vec<Complex64> {
    specs
        .iter()
        .map(|s| match s.kind {
            BusType::Pq => Complex64::new(1.0, 0.0),
            _ => Complex64::new(s.v_set, 0.0),
        })
        .collect()
}

/// Newton-Raphson in polar coordinates with a finite-difference Jacobian.
pub fn solve_newton(y: &DMatrix<Complex64>, specs: &[BusSpec], tol: f64, max_iter: usize) -> Result<PowerFlowSolution> {
    check_specs(y, specs)?;
    let mut v = flat_start(specs);
    // unknowns: angle of every non-slack bus, magnitude of every PQ bus
    let mut vars: Vec<(usize, bool)> = Vec::new();
    for (k, s) in specs.iter().enumerate() {
        if s.kind != BusType::Slack {
            vars.push((k, false));
        }
    }
    for (k, s) in specs.iter().enumerate() {
        if s.kind == BusType::Pq {
            vars.push((k, true));
        }
    }
    let m = vars.len();
    let perturb = |v: &mut [Complex64], (k, mag): (usize, bool), h: f64| {
        let (r, th) = v[k].to_polar();
        v[k] = if mag {
            Complex64::from_polar(r + h, th)
        } else {
            Complex64::from_polar(r, th + h)
        };
    };
    let mut f = mismatch(y, specs, &v);
    let mut norm = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for it in 0..=max_iter {
        if norm < tol {
            return Ok(PowerFlowSolution {
                v,
                iterations: it,
                mismatch: norm,
            });
        }
        if it == max_iter || !norm.is_finite() {
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for (col, &var) in vars.iter().enumerate() {
            let mut vp = v.clone();
            perturb(&mut vp, var, h);
            let fp = mismatch(y, specs, &vp);
            for row in 0..m {
                jac[(row, col)] = (fp[row] - f[row]) / h;
            }
        }
        let rhs = DVector::from_vec(f.iter().map(|x| -x).collect());
        let dx = jac.lu().solve(&rhs).ok_or(SimError::PowerFlowDiverged {
            iterations: it,
            mismatch: norm,
        })?;
        for (k, &var) in vars.iter().enumerate() {
            perturb(&mut v, var, dx[k]);
        }
        f = mismatch(y, specs, &v);
        norm = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    }
    Err(SimError::PowerFlowDiverged {
        iterations: max_iter,
        mismatch: norm,
    })
}

/// Gauss-Seidel fixed point. Slow but independent of the Newton path; kept
/// as a cross-check.
pub fn solve_gauss_seidel(y: &DMatrix<Complex64>, specs: &[BusSpec], tol: f64, max_iter: usize) -> Result<PowerFlowSolution> {
    check_specs(y, specs)?;
    let n = specs.len();
    let mut v = flat_start(specs);
    for it in 0..max_iter {
        for k in 0..n {
            let s = specs[k];
            if s.kind == BusType::Slack {
                continue;
            }
            let mut sum = Complex64::default();
            for j in 0..n {
                if j != k {
                    sum += y[(k, j)] * v[j];
                }
            }
            let mut sk = s.s_inj;
            if s.kind == BusType::Pv {
                sk.im = (v[k] * (sum + y[(k, k)] * v[k]).conj()).im;
            }
            let mut vk = ((sk / v[k]).conj() - sum) / y[(k, k)];
            if s.kind == BusType::Pv {
                vk = vk / vk.norm() * s.v_set;
            }
            v[k] = vk;
        }
        let f = mismatch(y, specs, &v);
        let norm = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if norm < tol {
            return Ok(PowerFlowSolution {
                v,
                iterations: it + 1,
                mismatch: norm,
            });
        }
        if !norm.is_finite() {
            break;
        }
    }
    let norm = mismatch(y, specs, &v).iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Err(SimError::PowerFlowDiverged {
        iterations: max_iter,
        mismatch: norm,
    })
}
