//! Electrical network in both domains.
//!
//! A [`Topology`] is described in engineering units. Both compilers first
//! reduce it to a per-unit phase-domain [`Circuit`]: node shunt capacitance
//! and conductance matrices, coupled R-L branches, and current injections.
//! [`emt::EmtNetwork`] turns the circuit into a state-space model over
//! capacitor voltages and inductor currents; [`pm::PmNetwork`] builds the
//! complex nodal admittance matrix at nominal frequency.

pub mod emt;
pub mod harmonic;
pub mod pm;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::frames::PerUnitBase;

pub use emt::EmtNetwork;
pub use harmonic::HarmonicSpec;
pub use pm::PmNetwork;

/// Per-km line data at nominal frequency (Ω/km, H/km, F/km).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub r1_ohm_per_km: f64,
    pub r0_ohm_per_km: f64,
    pub l1_h_per_km: f64,
    pub l0_h_per_km: f64,
    pub c1_f_per_km: f64,
    pub c0_f_per_km: f64,
}

impl Default for LineParams {
    fn default() -> Self {
        Self {
            r1_ohm_per_km: 0.121,
            r0_ohm_per_km: 0.446,
            l1_h_per_km: 1.33e-3,
            l0_h_per_km: 3.73e-3,
            c1_f_per_km: 8.762e-9,
            c0_f_per_km: 6.373e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiLine {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length_km: f64,
    #[serde(default)]
    pub params: Option<LineParams>,
}

/// Constant-impedance load fixed at nominal voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: String,
    pub bus: String,
    pub p_mw: f64,
    pub q_mvar: f64,
    #[serde(default = "default_true")]
    pub connected: bool,
}

fn default_true() -> bool {
    true
}

/// Resistive fault from the selected phases to ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultBranch {
    pub id: String,
    pub bus: String,
    pub r_ohm: f64,
    /// Subset of "abc".
    pub phases: String,
}

impl FaultBranch {
    pub fn phase_mask(&self) -> Result<[bool; 3]> {
        parse_phases(&self.phases)
    }
}

pub fn parse_phases(s: &str) -> Result<[bool; 3]> {
    let mut mask = [false; 3];
    for ch in s.chars() {
        match ch.to_ascii_lowercase() {
            'a' => mask[0] = true,
            'b' => mask[1] = true,
            'c' => mask[2] = true,
            _ => return Err(SimError::Config(format!("invalid phase `{ch}` in `{s}`"))),
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(SimError::Config("empty phase selection".into()));
    }
    Ok(mask)
}

/// Three-phase breaker in series with a line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breaker {
    pub id: String,
    pub line: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceKind {
    /// Converter: voltage behind the filter R-L in EMT, ideal current source in PM.
    Converter { r_ohm: f64, l_h: f64 },
    /// Machine: subtransient EMF behind R-L in EMT, Norton equivalent in PM.
    /// `neg_seq_ohm` is the `(R_2, X_2)` the phasor domain uses for the
    /// negative sequence; `None` keeps the R-L branch for all sequences.
    Machine {
        r_ohm: f64,
        l_h: f64,
        #[serde(default)]
        neg_seq_ohm: Option<(f64, f64)>,
    },
    /// Ideal current injection in both domains.
    Current,
}

/// Zero-sequence resistance added to converter branches, system per unit.
pub const CONVERTER_ZERO_SEQ_R_PU: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceAttachment {
    pub id: String,
    pub bus: String,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub s_base_mva: f64,
    pub v_base_kv: f64,
    pub f_nom: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<PiLine>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub faults: Vec<FaultBranch>,
    #[serde(default)]
    pub breakers: Vec<Breaker>,
    #[serde(default)]
    pub sources: Vec<SourceAttachment>,
    #[serde(default)]
    pub line_defaults: LineParams,
}

impl Topology {
    pub fn base(&self) -> PerUnitBase {
        PerUnitBase::new(self.s_base_mva * 1e6, self.v_base_kv * 1e3, self.f_nom)
    }

    pub fn bus_index(&self, id: &str) -> Result<usize> {
        self.buses
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| SimError::UnknownTarget(format!("bus {id}")))
    }

    pub fn line_index(&self, id: &str) -> Result<usize> {
        self.lines
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| SimError::UnknownTarget(format!("line {id}")))
    }

    pub fn source_index(&self, id: &str) -> Result<usize> {
        self.sources
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| SimError::UnknownTarget(format!("source {id}")))
    }

    pub fn load_index(&self, id: &str) -> Result<usize> {
        self.loads
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| SimError::UnknownTarget(format!("load {id}")))
    }

    pub fn fault_index(&self, id: &str) -> Result<usize> {
        self.faults
            .iter()
            .position(|f| f.id == id)
            .ok_or_else(|| SimError::UnknownTarget(format!("fault {id}")))
    }

    pub fn breaker_line(&self, id: &str) -> Result<usize> {
        let br = self
            .breakers
            .iter()
            .find(|b| b.id == id)
            .ok_or_else(|| SimError::UnknownTarget(format!("breaker {id}")))?;
        self.line_index(&br.line)
    }

    /// Structural checks: references resolve, lengths positive, and the graph
    /// of lines is connected.
    pub fn validate(&self) -> Result<()> {
        if self.s_base_mva <= 0.0 || self.v_base_kv <= 0.0 || self.f_nom <= 0.0 {
            return Err(SimError::Config("per-unit base must be positive".into()));
        }
        if self.buses.is_empty() {
            return Err(SimError::Config("topology has no buses".into()));
        }
        for l in &self.lines {
            self.bus_index(&l.from)?;
            self.bus_index(&l.to)?;
            if !(l.length_km > 0.0) {
                return Err(SimError::Config(format!("line {} has non-positive length", l.id)));
            }
            if l.from == l.to {
                return Err(SimError::Config(format!("line {} is a self-loop", l.id)));
            }
        }
        for ld in &self.loads {
            self.bus_index(&ld.bus)?;
        }
        for f in &self.faults {
            self.bus_index(&f.bus)?;
            f.phase_mask()?;
            if !(f.r_ohm > 0.0) {
                return Err(SimError::Config(format!("fault {} needs a positive resistance", f.id)));
            }
        }
        for b in &self.breakers {
            self.line_index(&b.line)?;
        }
        for s in &self.sources {
            self.bus_index(&s.bus)?;
            match s.kind {
                SourceKind::Converter { r_ohm, l_h } | SourceKind::Machine { r_ohm, l_h, .. } => {
                    if r_ohm < 0.0 || !(l_h > 0.0) {
                        return Err(SimError::Config(format!("source {} needs R ≥ 0 and L > 0", s.id)));
                    }
                }
                SourceKind::Current => {}
            }
        }
        // connectivity through lines
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            let (a, b) = (self.bus_index(&l.from)?, self.bus_index(&l.to)?);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(SimError::Config(format!("bus {} is not connected", self.buses[k].id)));
        }
        Ok(())
    }
}

/// Open/closed status of every switchable element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SwitchState {
    pub line_closed: Vec<[bool; 3]>,
    pub load_on: Vec<bool>,
    pub fault_on: Vec<bool>,
    pub source_closed: Vec<[bool; 3]>,
}

impl SwitchState {
    pub fn initial(topo: &Topology) -> Self {
        Self {
            line_closed: vec![[true; 3]; topo.lines.len()],
            load_on: topo.loads.iter().map(|l| l.connected).collect(),
            fault_on: vec![false; topo.faults.len()],
            source_closed: vec![[true; 3]; topo.sources.len()],
        }
    }
}

/// A coupled three-phase series R-L branch in per unit.
#[derive(Debug, Clone)]
pub(crate) struct RlBranch {
    pub from: Option<usize>,
    pub to: Option<usize>,
    pub r: Matrix3<f64>,
    /// Inductance in per-unit seconds (`L / Z_base`).
    pub l: Matrix3<f64>,
    pub closed: [bool; 3],
    /// Index of the source whose EMF drives this branch (from side).
    pub source: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BranchOrigin {
    Line(usize),
    Load(usize),
    Source(usize),
}

/// Per-unit phase-domain circuit for one switch state.
#[derive(Debug, Clone)]
pub(crate) struct Circuit {
    pub n_nodes: usize,
    /// Shunt capacitance per node in per-unit seconds (`C · Z_base`).
    pub shunt_c: Vec<Matrix3<f64>>,
    /// Shunt conductance per node in per unit.
    pub shunt_g: Vec<Matrix3<f64>>,
    pub branches: Vec<RlBranch>,
    pub origins: Vec<BranchOrigin>,
    pub omega: f64,
}

/// Self and mutual terms from positive and zero sequence values.
pub(crate) fn seq_to_phase(x1: f64, x0: f64) -> Matrix3<f64> {
    let s = (x0 + 2.0 * x1) / 3.0;
    let m = (x0 - x1) / 3.0;
    Matrix3::new(s, m, m, m, s, m, m, m, s)
}

impl Circuit {
    pub fn build(topo: &Topology, sw: &SwitchState) -> Result<Self> {
        let base = topo.base();
        let zb = base.z_base();
        let sb = base.s_base;
        let omega = base.omega_nom();
        let n = topo.buses.len();
        let mut shunt_c = vec![Matrix3::zeros(); n];
        let mut shunt_g = vec![Matrix3::zeros(); n];
        let mut branches = Vec::new();
        let mut origins = Vec::new();

        for (k, line) in topo.lines.iter().enumerate() {
            let p = line.params.unwrap_or(topo.line_defaults);
            let len = line.length_km;
            let f = topo.bus_index(&line.from)?;
            let t = topo.bus_index(&line.to)?;
            let r = seq_to_phase(p.r1_ohm_per_km, p.r0_ohm_per_km) * (len / zb);
            let l = seq_to_phase(p.l1_h_per_km, p.l0_h_per_km) * (len / zb);
            let c_half = seq_to_phase(p.c1_f_per_km, p.c0_f_per_km) * (0.5 * len * zb);
            shunt_c[f] += c_half;
            shunt_c[t] += c_half;
            branches.push(RlBranch {
                from: Some(f),
                to: Some(t),
                r,
                l,
                closed: sw.line_closed[k],
                source: None,
            });
            origins.push(BranchOrigin::Line(k));
        }

        for (k, load) in topo.loads.iter().enumerate() {
            let b = topo.bus_index(&load.bus)?;
            let on = sw.load_on[k];
            let p = load.p_mw * 1e6 / sb;
            let q = load.q_mvar * 1e6 / sb;
            if on {
                shunt_g[b] += Matrix3::identity() * p;
                if q < 0.0 {
                    shunt_c[b] += Matrix3::identity() * (-q / omega);
                }
            }
            if q > 0.0 {
                let l_pu = 1.0 / (omega * q);
                branches.push(RlBranch {
                    from: Some(b),
                    to: None,
                    r: Matrix3::zeros(),
                    l: Matrix3::identity() * l_pu,
                    closed: [on; 3],
                    source: None,
                });
                origins.push(BranchOrigin::Load(k));
            }
        }

        for (k, fault) in topo.faults.iter().enumerate() {
            if !sw.fault_on[k] {
                continue;
            }
            let b = topo.bus_index(&fault.bus)?;
            let g = zb / fault.r_ohm;
            for (ph, on) in fault.phase_mask()?.iter().enumerate() {
                if *on {
                    shunt_g[b][(ph, ph)] += g;
                }
            }
        }

        for (k, src) in topo.sources.iter().enumerate() {
            let b = topo.bus_index(&src.bus)?;
            match src.kind {
                SourceKind::Converter { r_ohm, l_h } | SourceKind::Machine { r_ohm, l_h, .. } => {
                    let mut r = Matrix3::identity() * (r_ohm / zb);
                    if matches!(src.kind, SourceKind::Converter { .. }) {
                        // three-wire converter: no path for zero-sequence current
                        r += Matrix3::repeat(CONVERTER_ZERO_SEQ_R_PU / 3.0);
                    }
                    branches.push(RlBranch {
                        from: None,
                        to: Some(b),
                        r,
                        l: Matrix3::identity() * (l_h / zb),
                        closed: sw.source_closed[k],
                        source: Some(k),
                    });
                    origins.push(BranchOrigin::Source(k));
                }
                SourceKind::Current => {}
            }
        }

        Ok(Self {
            n_nodes: n,
            shunt_c,
            shunt_g,
            branches,
            origins,
            omega,
        })
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Two buses joined by a line, converter at B2, ideal-ish source at B1.
    pub fn two_bus(length_km: f64) -> Topology {
        Topology {
            s_base_mva: 100.0,
            v_base_kv: 220.0,
            f_nom: 50.0,
            buses: vec![Bus { id: "B1".into() }, Bus { id: "B2".into() }],
            lines: vec![PiLine {
                id: "L12".into(),
                from: "B1".into(),
                to: "B2".into(),
                length_km,
                params: None,
            }],
            loads: vec![Load {
                id: "LD2".into(),
                bus: "B2".into(),
                p_mw: 100.0,
                q_mvar: 20.0,
                connected: true,
            }],
            faults: vec![FaultBranch {
                id: "F2".into(),
                bus: "B2".into(),
                r_ohm: 10.0,
                phases: "b".into(),
            }],
            breakers: vec![Breaker {
                id: "BR1".into(),
                line: "L12".into(),
            }],
            sources: vec![SourceAttachment {
                id: "G".into(),
                bus: "B1".into(),
                kind: SourceKind::Machine {
                    r_ohm: 0.5,
                    l_h: 0.05,
                    neg_seq_ohm: None,
                },
            }],
            line_defaults: LineParams::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_expansion_recovers_sequence_values() {
        let m = seq_to_phase(1.0, 4.0);
        // zero sequence eigenvector (1,1,1)
        let z = m * nalgebra::Vector3::new(1.0, 1.0, 1.0);
        assert!((z[0] - 4.0).abs() < 1e-12);
        // positive sequence direction (1,-1,0) lies in the orthogonal complement
        let p = m * nalgebra::Vector3::new(1.0, -1.0, 0.0);
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn phases_parse() {
        assert_eq!(parse_phases("abc").unwrap(), [true; 3]);
        assert_eq!(parse_phases("B").unwrap(), [false, true, false]);
        assert!(parse_phases("x").is_err());
        assert!(parse_phases("").is_err());
    }

    #[test]
    fn validate_rejects_bad_references() {
        let mut t = test_support::two_bus(100.0);
        t.validate().unwrap();
        t.lines[0].length_km = 0.0;
        assert!(t.validate().is_err());
        let mut t = test_support::two_bus(100.0);
        t.loads[0].bus = "nowhere".into();
        assert!(matches!(t.validate(), Err(SimError::UnknownTarget(_))));
        let mut t = test_support::two_bus(100.0);
        t.buses.push(Bus { id: "B3".into() });
        assert!(t.validate().is_err());
    }
}
