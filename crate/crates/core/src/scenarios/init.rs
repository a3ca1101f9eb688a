use num_complex::Complex64;

use super::systems::SystemDef;
use crate::error::{Result, SimError};
use crate::machines::SyncMachine;
use crate::network::SwitchState;
use crate::powerflow::{self, BusSpec, BusType, PowerFlowSolution};

/// Balanced operating point in system per unit (peak-based, `S = V I*`).
#[derive(Debug, Clone)]
pub struct InitialConditions {
    pub powerflow: PowerFlowSolution,
    /// Positive-sequence bus voltages.
    pub bus_v: Vec<Complex64>,
    /// Machine output power and current, in machine order.
    pub machine_s: Vec<Complex64>,
    pub machine_i: Vec<Complex64>,
    /// Converter output current, in converter order.
    pub vsc_i: Vec<Complex64>,
    /// Initialized machines.
    pub machines: Vec<SyncMachine>,
}

/// Solve the power flow for the scheduled dispatch and back-initialize every machine.
pub fn initialize_steady_state(def: &SystemDef) -> Result<InitialConditions> {
    def.validate()?;
    let topo = def.topology();
    let sb = def.s_base_mva;
    let y = powerflow::admittance(&topo, &SwitchState::initial(&topo))?;
    let mut specs = vec![BusSpec::pq(); topo.buses.len()];
    let mut vsc_s = Vec::with_capacity(def.vscs.len());
    for v in &def.vscs {
        let b = topo.bus_index(&v.bus)?;
        let s = Complex64::new(v.p_mw, v.q_mvar) / sb;
        specs[b].s_inj += s;
        vsc_s.push((b, s));
    }
    for m in &def.machines {
        let b = topo.bus_index(&m.bus)?;
        specs[b].kind = m.bus_type;
        specs[b].v_set = m.v_set;
        if m.bus_type == BusType::Pv {
            specs[b].s_inj.re += m.p_mw / sb;
        }
    }
    let pf = powerflow::solve_newton(&y, &specs, 1e-10, 30).or_else(|_| powerflow::solve_gauss_seidel(&y, &specs, 1e-10, 200_000))?;
    let s_bus = pf.injections(&y);
    let mut machine_s = Vec::new();
    let mut machine_i = Vec::new();
    let mut machines = Vec::new();
    for m in &def.machines {
        let b = topo.bus_index(&m.bus)?;
        let s_conv: Complex64 = vsc_s.iter().filter(|(k, _)| *k == b).map(|(_, s)| s).sum();
        let s = s_bus[b] - s_conv;
        let v = pf.v[b];
        machine_s.push(s);
        machine_i.push((s / v).conj());
        let sm = SyncMachine::init(m.params, m.avr, m.gov, sb, def.f_nom, v, s)
            .map_err(|e| SimError::InitFailure(format!("{}: {e}", m.id)))?;
        machines.push(sm);
    }
    let vsc_i = vsc_s.iter().map(|(b, s)| (s / pf.v[*b]).conj()).collect();
    Ok(InitialConditions {
        bus_v: pf.v.clone(),
        powerflow: pf,
        machine_s,
        machine_i,
        vsc_i,
        machines,
    })
}
