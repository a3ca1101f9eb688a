//! Phase-domain state-space network for EMT runs.
//!
//! States are node (capacitor) voltages followed by branch (inductor)
//! currents, all in per unit; inputs are one three-phase vector per source
//! (series EMF for converter/machine branches, injected current for current
//! sources). The linear network is advanced with its exact zero-order-hold
//! discretization, recomputed whenever the switch state changes.

use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;

use super::{BranchOrigin, Circuit, SourceKind, SwitchState, Topology};
use crate::error::{Result, SimError};
use crate::frames::ComplexPhasorSet;

type Discrete = Rc<(DMatrix<f64>, DMatrix<f64>)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum PendingOpen {
    Line(usize, usize),
    Source(usize, usize),
}

#[derive(Debug, Clone)]
pub struct EmtNetwork {
    topo: Topology,
    switch: SwitchState,
    n_nodes: usize,
    origins: Vec<BranchOrigin>,
    source_branch: Vec<Option<usize>>,
    line_branch: Vec<usize>,
    load_branch: Vec<Option<usize>>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    shunt_c: Vec<Matrix3<f64>>,
    branch_l: Vec<Matrix3<f64>>,
    dt: f64,
    cache: HashMap<SwitchState, Discrete>,
    current: Option<Discrete>,
    pending: Vec<PendingOpen>,
    scratch: DVector<f64>,
}

fn embed_inverse(m: &Matrix3<f64>, closed: [bool; 3]) -> Result<Matrix3<f64>> {
    let idx: Vec<usize> = (0..3).filter(|&k| closed[k]).collect();
    let mut out = Matrix3::zeros();
    if idx.is_empty() {
        return Ok(out);
    }
    let n = idx.len();
    let mut sub = DMatrix::zeros(n, n);
    for (i, &p) in idx.iter().enumerate() {
        for (j, &q) in idx.iter().enumerate() {
            sub[(i, j)] = m[(p, q)];
        }
    }
    let inv = sub
        .try_inverse()
        .ok_or_else(|| SimError::SingularNetwork("singular branch inductance".into()))?;
    for (i, &p) in idx.iter().enumerate() {
        for (j, &q) in idx.iter().enumerate() {
            out[(p, q)] = inv[(i, j)];
        }
    }
    Ok(out)
}

fn mask_matrix(m: &Matrix3<f64>, closed: [bool; 3]) -> Matrix3<f64> {
    let mut out = *m;
    for p in 0..3 {
        for q in 0..3 {
            if !closed[p] || !closed[q] {
                out[(p, q)] = 0.0;
            }
        }
    }
    out
}

impl EmtNetwork {
    pub fn n_states(&self) -> usize {
        3 * (self.n_nodes + self.origins.len())
    }

    pub fn n_inputs(&self) -> usize {
        3 * self.topo.sources.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn switch_state(&self) -> &SwitchState {
        &self.switch
    }

    pub fn node_offset(&self, node: usize) -> usize {
        3 * node
    }

    fn branch_offset(&self, br: usize) -> usize {
        3 * (self.n_nodes + br)
    }

    pub fn source_current_offset(&self, src: usize) -> Option<usize> {
        self.source_branch[src].map(|b| self.branch_offset(b))
    }

    pub fn line_current_offset(&self, line: usize) -> usize {
        self.branch_offset(self.line_branch[line])
    }

    pub fn input_offset(&self, src: usize) -> usize {
        3 * src
    }

    /// Per-state labels such as `v:B1:a` or `i:L12:b`.
    pub fn state_labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_states());
        for bus in &self.topo.buses {
            for ph in ["a", "b", "c"] {
                out.push(format!("v:{}:{ph}", bus.id));
            }
        }
        for o in &self.origins {
            let name = match *o {
                BranchOrigin::Line(k) => self.topo.lines[k].id.clone(),
                BranchOrigin::Load(k) => self.topo.loads[k].id.clone(),
                BranchOrigin::Source(k) => self.topo.sources[k].id.clone(),
            };
            for ph in ["a", "b", "c"] {
                out.push(format!("i:{name}:{ph}"));
            }
        }
        out
    }

    /// Assemble the continuous-time matrices for the current switch state.
    fn assemble(topo: &Topology, sw: &SwitchState) -> Result<(Circuit, DMatrix<f64>, DMatrix<f64>)> {
        let ckt = Circuit::build(topo, sw)?;
        let n = ckt.n_nodes;
        let nb = ckt.branches.len();
        let ns = 3 * (n + nb);
        let m = 3 * topo.sources.len();
        let mut a = DMatrix::zeros(ns, ns);
        let mut b = DMatrix::zeros(ns, m);
        let mut cinv = Vec::with_capacity(n);
        for (k, c) in ckt.shunt_c.iter().enumerate() {
            let inv = c.try_inverse().filter(|_| c.determinant().abs() > 1e-30).ok_or_else(|| {
                SimError::SingularNetwork(format!("bus {} has no capacitive path", topo.buses[k].id))
            })?;
            cinv.push(inv);
        }
        let put = |mat: &mut DMatrix<f64>, r0: usize, c0: usize, blk: &Matrix3<f64>, sign: f64| {
            for i in 0..3 {
                for j in 0..3 {
                    mat[(r0 + i, c0 + j)] += sign * blk[(i, j)];
                }
            }
        };
        for k in 0..n {
            let blk = -(cinv[k] * ckt.shunt_g[k]);
            put(&mut a, 3 * k, 3 * k, &blk, 1.0);
        }
        for (bi, br) in ckt.branches.iter().enumerate() {
            let row = 3 * (n + bi);
            let linv = embed_inverse(&br.l, br.closed)?;
            let r = mask_matrix(&br.r, br.closed);
            put(&mut a, row, row, &(linv * r), -1.0);
            if let Some(f) = br.from {
                put(&mut a, row, 3 * f, &linv, 1.0);
                put(&mut a, 3 * f, row, &cinv[f], -1.0);
            }
            if let Some(t) = br.to {
                put(&mut a, row, 3 * t, &linv, -1.0);
                put(&mut a, 3 * t, row, &cinv[t], 1.0);
            }
            if let Some(s) = br.source {
                put(&mut b, row, 3 * s, &linv, 1.0);
            }
        }
        for (s, src) in topo.sources.iter().enumerate() {
            if let SourceKind::Current = src.kind {
                let node = topo.bus_index(&src.bus)?;
                put(&mut b, 3 * node, 3 * s, &cinv[node], 1.0);
            }
        }
        Ok((ckt, a, b))
    }

    pub fn compile(topo: &Topology, dt: f64) -> Result<Self> {
        topo.validate()?;
        assert!(dt > 0.0);
        let sw = SwitchState::initial(topo);
        let (ckt, a, b) = Self::assemble(topo, &sw)?;
        let mut source_branch = vec![None; topo.sources.len()];
        let mut line_branch = vec![0; topo.lines.len()];
        let mut load_branch = vec![None; topo.loads.len()];
        for (bi, o) in ckt.origins.iter().enumerate() {
            match *o {
                BranchOrigin::Line(k) => line_branch[k] = bi,
                BranchOrigin::Load(k) => load_branch[k] = Some(bi),
                BranchOrigin::Source(k) => source_branch[k] = Some(bi),
            }
        }
        let ns = a.nrows();
        Ok(Self {
            topo: topo.clone(),
            switch: sw,
            n_nodes: ckt.n_nodes,
            origins: ckt.origins.clone(),
            source_branch,
            line_branch,
            load_branch,
            a,
            b,
            shunt_c: ckt.shunt_c.clone(),
            branch_l: ckt.branches.iter().map(|b| b.l).collect(),
            dt,
            cache: HashMap::new(),
            current: None,
            pending: Vec::new(),
            scratch: DVector::zeros(ns),
        })
    }

    fn rebuild(&mut self) -> Result<()> {
        let (ckt, a, b) = Self::assemble(&self.topo, &self.switch)?;
        self.a = a;
        self.b = b;
        self.shunt_c = ckt.shunt_c;
        self.current = None;
        Ok(())
    }

    fn discrete(&mut self) -> Discrete {
        if let Some(d) = &self.current {
            return d.clone();
        }
        let d = if let Some(d) = self.cache.get(&self.switch) {
            d.clone()
        } else {
            let ns = self.a.nrows();
            let m = self.b.ncols();
            let mut aug = DMatrix::zeros(ns + m, ns + m);
            aug.view_mut((0, 0), (ns, ns)).copy_from(&(&self.a * self.dt));
            aug.view_mut((0, ns), (ns, m)).copy_from(&(&self.b * self.dt));
            let e = aug.exp();
            let phi = e.view((0, 0), (ns, ns)).into_owned();
            let gamma = e.view((0, ns), (ns, m)).into_owned();
            let d = Rc::new((phi, gamma));
            self.cache.insert(self.switch.clone(), d.clone());
            d
        };
        self.current = Some(d.clone());
        d
    }

    /// Advance `x` by one step with inputs `u` held constant over the step.
    /// Pending breaker phases open at the first current zero crossing.
    pub fn step(&mut self, x: &mut DVector<f64>, u: &DVector<f64>) -> Result<()> {
        let d = self.discrete();
        let (phi, gamma) = (&d.0, &d.1);
        self.scratch.gemv(1.0, phi, x, 0.0);
        self.scratch.gemv(1.0, gamma, u, 1.0);
        std::mem::swap(x, &mut self.scratch);
        // x now holds the new state, scratch the previous one
        if !self.pending.is_empty() {
            let mut opened = false;
            let mut keep = Vec::with_capacity(self.pending.len());
            for p in std::mem::take(&mut self.pending) {
                let (off, ph) = match p {
                    PendingOpen::Line(k, ph) => (self.line_current_offset(k), ph),
                    PendingOpen::Source(k, ph) => match self.source_current_offset(k) {
                        Some(o) => (o, ph),
                        None => continue,
                    },
                };
                let prev = self.scratch[off + ph];
                let now = x[off + ph];
                if prev == 0.0 || prev * now <= 0.0 {
                    x[off + ph] = 0.0;
                    match p {
                        PendingOpen::Line(k, ph) => self.switch.line_closed[k][ph] = false,
                        PendingOpen::Source(k, ph) => self.switch.source_closed[k][ph] = false,
                    }
                    opened = true;
                } else {
                    keep.push(p);
                }
            }
            self.pending = keep;
            if opened {
                self.rebuild()?;
            }
        }
        Ok(())
    }

    pub fn apply_fault(&mut self, k: usize, on: bool) -> Result<()> {
        if k >= self.switch.fault_on.len() {
            return Err(SimError::UnknownTarget(format!("fault #{k}")));
        }
        if self.switch.fault_on[k] != on {
            self.switch.fault_on[k] = on;
            self.rebuild()?;
        }
        Ok(())
    }

    pub fn connect_load(&mut self, k: usize, on: bool, x: &mut DVector<f64>) -> Result<()> {
        if k >= self.switch.load_on.len() {
            return Err(SimError::UnknownTarget(format!("load #{k}")));
        }
        if self.switch.load_on[k] != on {
            self.switch.load_on[k] = on;
            if !on {
                if let Some(b) = self.load_branch[k] {
                    let off = self.branch_offset(b);
                    for ph in 0..3 {
                        x[off + ph] = 0.0;
                    }
                }
            }
            self.rebuild()?;
        }
        Ok(())
    }

    /// Request the given line phases to open at their next current zero.
    /// Already-open or already-pending phases are ignored.
    pub fn open_line_phases(&mut self, line: usize, phases: [bool; 3]) -> Result<()> {
        if line >= self.switch.line_closed.len() {
            return Err(SimError::UnknownTarget(format!("line #{line}")));
        }
        for (ph, &sel) in phases.iter().enumerate() {
            let p = PendingOpen::Line(line, ph);
            if sel && self.switch.line_closed[line][ph] && !self.pending.contains(&p) {
                self.pending.push(p);
            }
        }
        Ok(())
    }

    pub fn disconnect_source(&mut self, src: usize) -> Result<()> {
        if src >= self.switch.source_closed.len() {
            return Err(SimError::UnknownTarget(format!("source #{src}")));
        }
        for ph in 0..3 {
            let p = PendingOpen::Source(src, ph);
            if self.switch.source_closed[src][ph] && !self.pending.contains(&p) {
                self.pending.push(p);
            }
        }
        Ok(())
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn source_fully_open(&self, src: usize) -> bool {
        self.switch.source_closed[src].iter().all(|c| !c)
    }

    pub fn node_voltage(&self, x: &DVector<f64>, node: usize) -> [f64; 3] {
        let o = 3 * node;
        [x[o], x[o + 1], x[o + 2]]
    }

    pub fn source_current(&self, x: &DVector<f64>, src: usize) -> [f64; 3] {
        match self.source_current_offset(src) {
            Some(o) => [x[o], x[o + 1], x[o + 2]],
            None => [0.0; 3],
        }
    }

    pub fn line_current(&self, x: &DVector<f64>, line: usize) -> [f64; 3] {
        let o = self.line_current_offset(line);
        [x[o], x[o + 1], x[o + 2]]
    }

    /// Instantaneous state of a sinusoidal steady state given node voltage
    /// and source current phasors (per unit, peak).
    pub fn initial_state(&self, node_v: &[ComplexPhasorSet], source_i: &[ComplexPhasorSet], t0: f64) -> DVector<f64> {
        let ckt = Circuit::build(&self.topo, &self.switch).expect("already compiled once");
        let w = ckt.omega;
        let mut ph = vec![Complex64::default(); self.n_states()];
        for (k, v) in node_v.iter().enumerate() {
            for (p, val) in v.as_array().iter().enumerate() {
                ph[3 * k + p] = *val;
            }
        }
        for (bi, br) in ckt.branches.iter().enumerate() {
            let off = 3 * (self.n_nodes + bi);
            let cur: [Complex64; 3] = match self.origins[bi] {
                BranchOrigin::Source(s) => source_i[s].as_array(),
                _ => {
                    let vf = br.from.map(|f| node_v[f].as_array()).unwrap_or([Complex64::default(); 3]);
                    let vt = br.to.map(|t| node_v[t].as_array()).unwrap_or([Complex64::default(); 3]);
                    let z = super::pm::complex_block(&br.r, &br.l, w);
                    let y = super::pm::embed_complex_inverse(&z, br.closed);
                    let dv = nalgebra::Vector3::new(vf[0] - vt[0], vf[1] - vt[1], vf[2] - vt[2]);
                    let i = y * dv;
                    [i[0], i[1], i[2]]
                }
            };
            for p in 0..3 {
                ph[off + p] = cur[p];
            }
        }
        let rot = Complex64::from_polar(1.0, w * t0);
        DVector::from_iterator(ph.len(), ph.iter().map(|z| (z * rot).re))
    }

    /// Energy stored in capacitors and inductors (per-unit seconds scale).
    pub fn stored_energy(&self, x: &DVector<f64>) -> f64 {
        let mut e = 0.0;
        for k in 0..self.n_nodes {
            let v = nalgebra::Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
            e += 0.5 * (v.transpose() * self.shunt_c[k] * v)[(0, 0)];
        }
        for (bi, l) in self.branch_l.iter().enumerate() {
            let o = self.branch_offset(bi);
            let i = nalgebra::Vector3::new(x[o], x[o + 1], x[o + 2]);
            e += 0.5 * (i.transpose() * l * i)[(0, 0)];
        }
        e
    }
}

pub fn compile_emt(topo: &Topology, dt: f64) -> Result<EmtNetwork> {
    EmtNetwork::compile(topo, dt)
}
