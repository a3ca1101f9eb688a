use std::time::Instant;

use indexmap::IndexMap;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::init::{initialize_steady_state, InitialConditions};
use super::systems::SystemDef;
use super::{ScenarioConfig, SystemKind, TestId};
use crate::error::{Result, SimError};
use crate::frames::{clarke, fortescue, inverse_clarke, wrap_angle, ComplexPhasorSet, PerUnitBase, ThreePhaseSample};
use crate::machines::SyncMachine;
use crate::network::{EmtNetwork, HarmonicSpec, PmNetwork, Topology};
use crate::solver::{check_bounded, run_events, EventAction, EventSchedule, EventTarget};
use crate::vsc::{Vsc, VscFeatures, VscGains, VscModel, VscOutputs};

/// Bound on per-unit network states before a run is declared divergent.
pub const STATE_BOUND: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub system: SystemKind,
    pub test: TestId,
    pub model: VscModel,
    pub dt: f64,
    pub duration: f64,
    pub record_stride: usize,
    pub features: VscFeatures,
    pub gains: IndexMap<String, VscGains>,
    /// Normalization base per signal (rated values).
    pub bases: IndexMap<String, f64>,
}

/// Recorded time series. Every series shares `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub time: Vec<f64>,
    pub signals: IndexMap<String, Vec<f64>>,
    pub wall_clock_s: f64,
    pub metadata: RunMetadata,
}

impl RunResult {
    pub fn signal(&self, name: &str) -> Result<&[f64]> {
        self.signals
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| SimError::UnknownTarget(format!("signal {name}")))
    }

    /// Sample spacing of the stored series.
    pub fn record_dt(&self) -> f64 {
        self.metadata.dt * self.metadata.record_stride as f64
    }

    pub fn base(&self, name: &str) -> f64 {
        self.metadata.bases.get(name).copied().unwrap_or(1.0)
    }

    /// Value at or just before `t`.
    pub fn value_at(&self, name: &str, t: f64) -> Result<f64> {
        let s = self.signal(name)?;
        let k = self.time.partition_point(|&x| x <= t + 1e-12).saturating_sub(1);
        Ok(s[k.min(s.len() - 1)])
    }
}

const VSC_SIGNALS: [&str; 17] = [
    "P_ac", "Q_ac", "iq_pos", "id_pos", "iq_neg", "id_neg", "vq_pos", "vd_pos", "vq_neg", "vd_neg", "iq_ref",
    "id_ref", "f", "lvrt", "Ia", "Ib", "Ic",
];

struct Recorder {
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
    time: Vec<f64>,
    row: Vec<f64>,
}

impl Recorder {
    fn new(names: Vec<String>, capacity: usize) -> Self {
        let cols = names.iter().map(|_| Vec::with_capacity(capacity)).collect();
        Self {
            names,
            cols,
            time: Vec::with_capacity(capacity),
            row: Vec::new(),
        }
    }

    fn commit(&mut self, t: f64) {
        debug_assert_eq!(self.row.len(), self.cols.len());
        self.time.push(t);
        for (c, v) in self.cols.iter_mut().zip(self.row.drain(..)) {
            c.push(v);
        }
    }

    fn finish(self) -> (Vec<f64>, IndexMap<String, Vec<f64>>) {
        (self.time, self.names.into_iter().zip(self.cols).collect())
    }
}

fn push_vsc(row: &mut Vec<f64>, o: &VscOutputs, i_abc: [f64; 3]) {
    row.extend_from_slice(&[
        o.p,
        o.q,
        o.iq_pos,
        o.id_pos,
        o.iq_neg,
        o.id_neg,
        o.vq_pos,
        o.vd_pos,
        o.vq_neg,
        o.vd_neg,
        o.iq_ref,
        o.id_ref,
        o.f,
        if o.lvrt { 1.0 } else { 0.0 },
    ]);
    row.extend_from_slice(&i_abc);
}

/// Network-domain specific state.
enum Domain {
    Emt {
        net: EmtNetwork,
        x: DVector<f64>,
        u: DVector<f64>,
    },
    Pm {
        net: PmNetwork,
        theta: Vec<f64>,
    },
}

struct Engine {
    topo: Topology,
    base: PerUnitBase,
    machines: Vec<SyncMachine>,
    vscs: Vec<Vsc>,
    harmonics: Vec<(HarmonicSpec, bool)>,
    /// Source index offsets: machines, then converters, then harmonic sources.
    n_m: usize,
    n_v: usize,
    machine_bus: Vec<usize>,
    vsc_bus: Vec<usize>,
    domain: Domain,
}

impl EventTarget for Engine {
    fn apply_event(&mut self, action: &EventAction, _t: f64) -> Result<()> {
        match action {
            EventAction::ApplyFault { fault } | EventAction::ClearFault { fault } => {
                let on = matches!(action, EventAction::ApplyFault { .. });
                let k = self.topo.fault_index(fault)?;
                match &mut self.domain {
                    Domain::Emt { net, .. } => net.apply_fault(k, on),
                    Domain::Pm { net, .. } => net.apply_fault(k, on),
                }
            }
            EventAction::OpenBreakerPhase { breaker, phases } => {
                let l = self.topo.breaker_line(breaker)?;
                match &mut self.domain {
                    Domain::Emt { net, .. } => net.open_line_phases(l, *phases),
                    Domain::Pm { net, .. } => net.open_line_phases(l, *phases),
                }
            }
            EventAction::ConnectLoad { load } => {
                let k = self.topo.load_index(load)?;
                match &mut self.domain {
                    Domain::Emt { net, x, .. } => net.connect_load(k, true, x),
                    Domain::Pm { net, .. } => net.connect_load(k, true),
                }
            }
            EventAction::DisconnectSource { source } => {
                let s = self.topo.source_index(source)?;
                if s >= self.n_m && s < self.n_m + self.n_v {
                    self.vscs[s - self.n_m].disconnect();
                }
                match &mut self.domain {
                    Domain::Emt { net, .. } => net.disconnect_source(s),
                    Domain::Pm { net, .. } => {
                        if s < self.n_m {
                            self.machines[s].connected = false;
                        }
                        net.disconnect_source(s)
                    }
                }
            }
            EventAction::SetSetpoint { vsc, p_mw, q_mvar } => {
                let v = self
                    .vscs
                    .iter_mut()
                    .find(|v| &v.id == vsc)
                    .ok_or_else(|| SimError::UnknownTarget(format!("converter {vsc}")))?;
                if let Some(p) = p_mw {
                    v.p_set = p * 1e6;
                }
                if let Some(q) = q_mvar {
                    v.q_set = q * 1e6;
                }
                Ok(())
            }
            EventAction::EnableHarmonics { source } => {
                let s = self.topo.source_index(source)?;
                let k = s
                    .checked_sub(self.n_m + self.n_v)
                    .filter(|k| *k < self.harmonics.len())
                    .ok_or_else(|| SimError::UnknownTarget(format!("harmonic source {source}")))?;
                self.harmonics[k].1 = true;
                Ok(())
            }
        }
    }
}

/// Phasor seen in the nominal rotating frame from instantaneous values.
fn space_phasor(abc: [f64; 3], omega: f64, t: f64) -> Complex64 {
    clarke(&ThreePhaseSample::new(abc[0], abc[1], abc[2], t)) * Complex64::from_polar(1.0, -omega * t)
}

impl Engine {
    fn build(def: &SystemDef, ic: &InitialConditions, model: VscModel, features: VscFeatures, dt: f64) -> Result<Self> {
        let topo = def.topology();
        let base = topo.base();
        let machines = ic.machines.clone();
        let mut vscs = Vec::with_capacity(def.vscs.len());
        let mut vsc_bus = Vec::new();
        for (k, d) in def.vscs.iter().enumerate() {
            let b = topo.bus_index(&d.bus)?;
            let mut v = Vsc::new(&d.id, d.params, features, model, d.p_mw * 1e6, d.q_mvar * 1e6)?;
            v.init_steady(ic.bus_v[b] * base.v_pk(), ic.vsc_i[k] * base.i_pk(), 0.0, dt);
            vscs.push(v);
            vsc_bus.push(b);
        }
        let machine_bus = def
            .machines
            .iter()
            .map(|m| topo.bus_index(&m.bus))
            .collect::<Result<Vec<_>>>()?;
        let harmonics = def.harmonics.iter().map(|h| (h.spec.clone(), false)).collect();
        let n_src = topo.sources.len();
        let domain = if model.is_emt() {
            let net = EmtNetwork::compile(&topo, dt)?;
            let node_v: Vec<_> = ic.bus_v.iter().map(|v| ComplexPhasorSet::balanced(*v)).collect();
            let mut src_i = vec![ComplexPhasorSet::default(); n_src];
            for (k, i) in ic.machine_i.iter().enumerate() {
                src_i[k] = ComplexPhasorSet::balanced(*i);
            }
            for (k, i) in ic.vsc_i.iter().enumerate() {
                src_i[def.machines.len() + k] = ComplexPhasorSet::balanced(*i);
            }
            let x = net.initial_state(&node_v, &src_i, 0.0);
            let u = DVector::zeros(net.n_inputs());
            Domain::Emt { net, x, u }
        } else {
            let net = PmNetwork::compile(&topo)?;
            let theta = vsc_bus.iter().map(|&b| ic.bus_v[b].arg()).collect();
            Domain::Pm { net, theta }
        };
        Ok(Self {
            topo,
            base,
            n_m: machines.len(),
            n_v: vscs.len(),
            machines,
            vscs,
            harmonics,
            machine_bus,
            vsc_bus,
            domain,
        })
    }

    fn signal_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for v in &self.vscs {
            for s in VSC_SIGNALS {
                names.push(format!("{}.{s}", v.id));
            }
        }
        for s in &self.topo.sources[..self.n_m] {
            names.push(format!("{}.T_e", s.id));
            names.push(format!("{}.omega_m", s.id));
        }
        for b in &self.topo.buses {
            for ph in ["Va", "Vb", "Vc"] {
                names.push(format!("{}.{ph}", b.id));
            }
        }
        names
    }

    fn bases(&self, names: &[String]) -> IndexMap<String, f64> {
        let mut out = IndexMap::new();
        for v in &self.vscs {
            let p = &v.params;
            for s in VSC_SIGNALS {
                let b = match s {
                    "P_ac" | "Q_ac" => p.s_rated(),
                    "vq_pos" | "vd_pos" | "vq_neg" | "vd_neg" => p.v_g_pk(),
                    "f" => p.f_nom,
                    "lvrt" => 1.0,
                    _ => p.i_rated_pk(),
                };
                out.insert(format!("{}.{s}", v.id), b);
            }
        }
        for n in names {
            if !out.contains_key(n) {
                let b = if n.ends_with(".Va") || n.ends_with(".Vb") || n.ends_with(".Vc") {
                    self.base.v_pk()
                } else {
                    1.0
                };
                out.insert(n.clone(), b);
            }
        }
        out
    }

    /// Advance everything by one step, writing the signals at `t` into `row`.
    fn step(&mut self, t: f64, dt: f64, row: &mut Vec<f64>, record: bool) -> Result<()> {
        let w = self.base.omega_nom();
        let v_pk = self.base.v_pk();
        let i_pk = self.base.i_pk();
        let n_m = self.n_m;
        let n_v = self.n_v;
        match &mut self.domain {
            Domain::Emt { net, x, u } => {
                let mut te = vec![0.0; n_m];
                let mut omega = vec![0.0; n_m];
                for (k, m) in self.machines.iter_mut().enumerate() {
                    if m.connected && net.source_fully_open(k) {
                        m.connected = false;
                    }
                    let i = space_phasor(net.source_current(x, k), w, t);
                    let vt = clarke(&to_sample(net.node_voltage(x, self.machine_bus[k]), t)).norm();
                    let (i_d, i_q) = m.current_dq(i);
                    // held over the step by the network: rotate to mid-step
                    let e = m.emf_phasor_transient(i_d, i_q, vt) * Complex64::from_polar(1.0, w * (t + 0.5 * dt));
                    let s = inverse_clarke(e, t);
                    let off = net.input_offset(k);
                    u[off] = s.a;
                    u[off + 1] = s.b;
                    u[off + 2] = s.c;
                    omega[k] = m.state.omega;
                    te[k] = m.step(i_d, i_q, vt, t, dt)?;
                }
                let mut vsc_rows = Vec::with_capacity(n_v);
                for (k, v) in self.vscs.iter_mut().enumerate() {
                    let src = n_m + k;
                    let vb = net.node_voltage(x, self.vsc_bus[k]).map(|z| z * v_pk);
                    let ib = net.source_current(x, src).map(|z| z * i_pk);
                    let (vc, o) = v.step_emt(vb, ib, t, dt)?;
                    let off = net.input_offset(src);
                    for ph in 0..3 {
                        u[off + ph] = vc[ph] / v_pk;
                    }
                    vsc_rows.push((o, ib));
                }
                for (k, (h, on)) in self.harmonics.iter().enumerate() {
                    let off = net.input_offset(n_m + n_v + k);
                    let val = if *on { h.waveform(w, t + 0.5 * dt) } else { [0.0; 3] };
                    for ph in 0..3 {
                        u[off + ph] = val[ph];
                    }
                }
                if record {
                    for (o, ib) in &vsc_rows {
                        push_vsc(row, o, *ib);
                    }
                    for k in 0..n_m {
                        row.push(te[k]);
                        row.push(omega[k]);
                    }
                    for b in 0..self.topo.buses.len() {
                        row.extend(net.node_voltage(x, b).iter().map(|z| z * v_pk));
                    }
                }
                net.step(x, u)?;
                check_bounded(x.as_slice(), STATE_BOUND, t + dt, dt, "network state")?;
            }
            Domain::Pm { net, theta } => {
                let n_src = self.topo.sources.len();
                let mut inputs = vec![ComplexPhasorSet::default(); n_src];
                for (k, m) in self.machines.iter().enumerate() {
                    inputs[k] = ComplexPhasorSet::balanced(m.emf_phasor());
                }
                for (k, (h, on)) in self.harmonics.iter().enumerate() {
                    if *on {
                        inputs[n_m + n_v + k] = h.phasors(w, t);
                    }
                }
                let scale = |s: &ComplexPhasorSet, f: f64| ComplexPhasorSet::from_array(s.as_array().map(|z| z * f));
                // the converter angle follows its own bus voltage: fixed-point on the angle
                let mut v_bus = Vec::new();
                for _ in 0..8 {
                    for (k, v) in self.vscs.iter().enumerate() {
                        inputs[n_m + k] = scale(&v.injection(theta[k]), 1.0 / i_pk);
                    }
                    v_bus = net.solve(&inputs)?;
                    let mut worst: f64 = 0.0;
                    for (k, v) in self.vscs.iter().enumerate() {
                        let th = v.reference_angle(&scale(&v_bus[self.vsc_bus[k]], v_pk));
                        worst = worst.max(wrap_angle(th - theta[k]).abs());
                        theta[k] = th;
                    }
                    if worst < 1e-10 {
                        break;
                    }
                }
                let mut vsc_rows = Vec::with_capacity(n_v);
                for (k, v) in self.vscs.iter_mut().enumerate() {
                    let i = inputs[n_m + k];
                    let ib = scale(&i, i_pk).instantaneous(w, t);
                    let o = v.step_pm(&scale(&v_bus[self.vsc_bus[k]], v_pk), t, dt)?;
                    vsc_rows.push((o, [ib.a, ib.b, ib.c]));
                }
                let mut te = vec![0.0; n_m];
                let mut omega = vec![0.0; n_m];
                for (k, m) in self.machines.iter_mut().enumerate() {
                    omega[k] = m.state.omega;
                    if !m.connected {
                        continue;
                    }
                    let i = net.source_current(k, &inputs[k], &v_bus);
                    let (ip, _, _) = fortescue(&i);
                    let (vp, _, _) = fortescue(&v_bus[self.machine_bus[k]]);
                    let (i_d, i_q) = m.current_dq(ip);
                    te[k] = m.step(i_d, i_q, vp.norm(), t, dt)?;
                }
                if record {
                    for (o, ib) in &vsc_rows {
                        push_vsc(row, o, *ib);
                    }
                    for k in 0..n_m {
                        row.push(te[k]);
                        row.push(omega[k]);
                    }
                    for v in &v_bus {
                        let s = scale(v, v_pk).instantaneous(w, t);
                        row.extend_from_slice(&[s.a, s.b, s.c]);
                    }
                }
            }
        }
        Ok(())
    }
}

fn to_sample(v: [f64; 3], t: f64) -> ThreePhaseSample {
    ThreePhaseSample::new(v[0], v[1], v[2], t)
}

/// Run a validated scenario from its steady state.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    let def = cfg.system_def()?;
    run_system(cfg, &def)
}

/// Run with an explicit system description (the config's system fields are
/// used only for events, features and metadata).
pub fn run_system(cfg: &ScenarioConfig, def: &SystemDef) -> Result<RunResult> {
    let dt = cfg.dt;
    let features = cfg.features();
    let ic = initialize_steady_state(def)?;
    let mut eng = Engine::build(def, &ic, cfg.model, features, dt)?;
    let mut schedule = EventSchedule::new(cfg.events());
    let names = eng.signal_names();
    let bases = eng.bases(&names);
    let n_steps = (cfg.duration() / dt).round() as usize;
    let stride = cfg.record_stride.max(1);
    let mut rec = Recorder::new(names, n_steps / stride + 1);
    let started = Instant::now();
    for k in 0..n_steps {
        let t = k as f64 * dt;
        run_events(&mut schedule, t, &mut eng)?;
        let record = k % stride == 0;
        eng.step(t, dt, &mut rec.row, record)?;
        if record {
            rec.commit(t);
        }
    }
    let wall_clock_s = started.elapsed().as_secs_f64();
    let gains = eng.vscs.iter().map(|v| (v.id.clone(), v.gains)).collect();
    let (time, signals) = rec.finish();
    Ok(RunResult {
        time,
        signals,
        wall_clock_s,
        metadata: RunMetadata {
            system: cfg.system,
            test: cfg.test,
            model: cfg.model,
            dt,
            duration: cfg.duration(),
            record_stride: stride,
            features,
            gains,
            bases,
        },
    })
}
