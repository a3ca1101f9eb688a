//! The two test grids as data.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::machines::{AvrParams, GovParams, SgParams};
use crate::network::{
    Breaker, Bus, FaultBranch, HarmonicSpec, LineParams, Load, PiLine, SourceAttachment, SourceKind, Topology,
};
use crate::powerflow::BusType;
use crate::vsc::VscParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineDef {
    pub id: String,
    pub bus: String,
    pub params: SgParams,
    #[serde(default)]
    pub avr: AvrParams,
    #[serde(default)]
    pub gov: GovParams,
    /// `slack` or `pv`.
    pub bus_type: BusType,
    pub v_set: f64,
    /// Scheduled output; ignored for the slack machine.
    #[serde(default)]
    pub p_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VscDef {
    pub id: String,
    pub bus: String,
    pub params: VscParams,
    pub p_mw: f64,
    #[serde(default)]
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicDef {
    pub id: String,
    pub bus: String,
    pub spec: HarmonicSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDef {
    pub name: String,
    pub s_base_mva: f64,
    pub v_base_kv: f64,
    pub f_nom: f64,
    pub buses: Vec<String>,
    #[serde(default)]
    pub line_defaults: LineParams,
    pub lines: Vec<PiLine>,
    #[serde(default)]
    pub loads: Vec<Load>,
    #[serde(default)]
    pub faults: Vec<FaultBranch>,
    #[serde(default)]
    pub breakers: Vec<Breaker>,
    #[serde(default)]
    pub machines: Vec<MachineDef>,
    #[serde(default)]
    pub vscs: Vec<VscDef>,
    #[serde(default)]
    pub harmonics: Vec<HarmonicDef>,
}

impl SystemDef {
    /// Network topology with sources ordered machines, converters, harmonic injections.
    pub fn topology(&self) -> Topology {
        let mut sources = Vec::new();
        for m in &self.machines {
            let (r_ohm, l_h) = m.params.stator_rl_si(self.v_base_kv, self.f_nom);
            sources.push(SourceAttachment {
                id: m.id.clone(),
                bus: m.bus.clone(),
                kind: SourceKind::Machine {
                    r_ohm,
                    l_h,
                    neg_seq_ohm: Some(m.params.negative_sequence_si(self.v_base_kv, self.f_nom)),
                },
            });
        }
        for v in &self.vscs {
            sources.push(SourceAttachment {
                id: v.id.clone(),
                bus: v.bus.clone(),
                kind: SourceKind::Converter {
                    r_ohm: v.params.r_ohm,
                    l_h: v.params.l_h,
                },
            });
        }
        for h in &self.harmonics {
            sources.push(SourceAttachment {
                id: h.id.clone(),
                bus: h.bus.clone(),
                kind: SourceKind::Current,
            });
        }
        Topology {
            s_base_mva: self.s_base_mva,
            v_base_kv: self.v_base_kv,
            f_nom: self.f_nom,
            buses: self.buses.iter().map(|id| Bus { id: id.clone() }).collect(),
            lines: self.lines.clone(),
            loads: self.loads.clone(),
            faults: self.faults.clone(),
            breakers: self.breakers.clone(),
            sources,
            line_defaults: self.line_defaults,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let topo = self.topology();
        topo.validate()?;
        let mut ids: Vec<&str> = topo.sources.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::Config("source ids must be unique".into()));
        }
        for m in &self.machines {
            m.params.validate().map_err(|e| in_context(&m.id, e))?;
            if m.bus_type == BusType::Pq {
                return Err(SimError::Config(format!("machine {} must be slack or pv", m.id)));
            }
        }
        if self.machines.iter().filter(|m| m.bus_type == BusType::Slack).count() != 1 {
            return Err(SimError::Config("exactly one machine must be the slack".into()));
        }
        let mut gen_buses: Vec<&str> = self.machines.iter().map(|m| m.bus.as_str()).collect();
        gen_buses.sort_unstable();
        if gen_buses.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimError::Config("at most one machine per bus".into()));
        }
        for v in &self.vscs {
            v.params.validate().map_err(|e| in_context(&v.id, e))?;
            if (v.params.v_rated_kv - self.v_base_kv).abs() > 1e-9 {
                return Err(SimError::Config(format!(
                    "converter {} rated voltage differs from the network voltage",
                    v.id
                )));
            }
        }
        for h in &self.harmonics {
            h.spec.validate()?;
        }
        Ok(())
    }

    pub fn vsc_index(&self, id: &str) -> Result<usize> {
        self.vscs
            .iter()
            .position(|v| v.id == id)
            .ok_or_else(|| SimError::UnknownTarget(format!("converter {id}")))
    }
}

fn in_context(id: &str, e: SimError) -> SimError {
    match e {
        SimError::Config(m) => SimError::Config(format!("{id}: {m}")),
        other => other,
    }
}

fn line(id: &str, from: &str, to: &str, km: f64) -> PiLine {
    PiLine {
        id: id.into(),
        from: from.into(),
        to: to.into(),
        length_km: km,
        params: None,
    }
}

fn load(id: &str, bus: &str, p: f64, q: f64, connected: bool) -> Load {
    Load {
        id: id.into(),
        bus: bus.into(),
        p_mw: p,
        q_mvar: q,
        connected,
    }
}

fn fault(id: &str, bus: &str, r: f64, phases: &str) -> FaultBranch {
    FaultBranch {
        id: id.into(),
        bus: bus.into(),
        r_ohm: r,
        phases: phases.into(),
    }
}

/// Harmonic content of the small-system source, referenced to a 30 MW / 10 Mvar load.
pub fn default_harmonics(s_base_mva: f64) -> HarmonicSpec {
    let (i_ref_pu, phi_ref) = HarmonicSpec::reference_from_load(30.0 / s_base_mva, 10.0 / s_base_mva);
    HarmonicSpec {
        orders: vec![2, 3, 4, 5, 7, 11, 13],
        magnitudes_pct: vec![1.0, 25.0, 2.5, 15.0, 7.5, 4.0, 2.5],
        i_ref_pu,
        phi_ref,
    }
}

/// One 400 MVA machine feeding a converter bus over a single line (220 kV).
pub fn build_small_system() -> SystemDef {
    let kv = 220.0;
    let mut g = SgParams::table("G1").expect("built-in data");
    g.s_n_mva = 400.0;
    g.v_n_kv = kv;
    SystemDef {
        name: "small".into(),
        s_base_mva: 100.0,
        v_base_kv: kv,
        f_nom: 50.0,
        buses: vec!["B1".into(), "B2".into()],
        line_defaults: LineParams::default(),
        lines: vec![line("L12", "B1", "B2", 50.0)],
        loads: vec![
            load("LD2", "B2", 300.0, 60.0, true),
            load("LD_STEP", "B2", 150.0, 20.0, false),
        ],
        faults: vec![fault("F_SYM", "B2", 7.0, "abc"), fault("F_ASYM", "B2", 10.0, "b")],
        breakers: vec![],
        machines: vec![MachineDef {
            id: "SG1".into(),
            bus: "B1".into(),
            params: g,
            avr: AvrParams::default(),
            gov: GovParams::default(),
            bus_type: BusType::Slack,
            v_set: 1.05,
            p_mw: 0.0,
        }],
        vscs: vec![VscDef {
            id: "VSC1".into(),
            bus: "B2".into(),
            params: VscParams::from_pu(100.0, kv, 50.0, 0.005, 0.15),
            p_mw: 50.0,
            q_mvar: 0.0,
        }],
        harmonics: vec![HarmonicDef {
            id: "H1".into(),
            bus: "B2".into(),
            spec: default_harmonics(100.0),
        }],
    }
}

/// Four machines, two converters, nine buses (400 kV).
pub fn build_large_system() -> SystemDef {
    let kv = 400.0;
    let gen = |id: &str, data: &str, bus: &str, kind: BusType, v: f64, p: f64| {
        let mut params = SgParams::table(data).expect("built-in data");
        params.v_n_kv = kv;
        MachineDef {
            id: id.into(),
            bus: bus.into(),
            params,
            avr: AvrParams::default(),
            gov: GovParams::default(),
            bus_type: kind,
            v_set: v,
            p_mw: p,
        }
    };
    let vsc = |id: &str, bus: &str| VscDef {
        id: id.into(),
        bus: bus.into(),
        params: VscParams::from_pu(250.0, kv, 50.0, 0.005, 0.15),
        p_mw: 150.0,
        q_mvar: 0.0,
    };
    let buses = ["N0", "N1", "N2", "N3", "N4", "N5", "N6", "M"];
    SystemDef {
        name: "large".into(),
        s_base_mva: 100.0,
        v_base_kv: kv,
        f_nom: 50.0,
        buses: buses.iter().map(|b| b.to_string()).collect(),
        line_defaults: LineParams::default(),
        lines: vec![
            line("L01", "N0", "N1", 80.0),
            line("L02", "N0", "N2", 100.0),
            line("L14", "N1", "N4", 60.0),
            line("L24", "N2", "N4", 70.0),
            line("L36", "N3", "N6", 50.0),
            line("L46", "N4", "N6", 80.0),
            line("L56", "N5", "N6", 40.0),
            line("L35A", "N3", "M", 40.0),
            line("L35B", "M", "N5", 40.0),
        ],
        loads: vec![
            load("LD4", "N4", 800.0, 150.0, true),
            load("LD5", "N5", 600.0, 120.0, true),
            load("LD6", "N6", 600.0, 120.0, true),
        ],
        faults: vec![fault("F_N4", "N4", 1.0, "c"), fault("F_M", "M", 1.0, "c")],
        breakers: vec![
            Breaker {
                id: "BR_A".into(),
                line: "L35A".into(),
            },
            Breaker {
                id: "BR_B".into(),
                line: "L35B".into(),
            },
        ],
        machines: vec![
            gen("G0", "G0", "N0", BusType::Slack, 1.03, 0.0),
            gen("G1", "G1", "N1", BusType::Pv, 1.02, 500.0),
            gen("G2", "G2", "N2", BusType::Pv, 1.02, 350.0),
            gen("G3", "G3", "N3", BusType::Pv, 1.02, 350.0),
        ],
        vscs: vec![vsc("VSC1", "N4"), vsc("VSC2", "N5")],
        harmonics: vec![],
    }
}
