//! Phase-domain nodal admittance network at nominal frequency.
//!
//! Converters and current sources inject currents; machines appear as
//! Norton equivalents of their subtransient EMF. All switching is immediate.

use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector, Dyn, Matrix3, Vector3, LU};
use num_complex::Complex64;

use super::{Circuit, SourceKind, SwitchState, Topology};
use crate::error::{Result, SimError};
use crate::frames::{fortescue, inverse_fortescue, ComplexPhasorSet};

type Factor = Rc<LU<Complex64, Dyn, Dyn>>;

pub(crate) fn complex_block(r: &Matrix3<f64>, l: &Matrix3<f64>, omega: f64) -> Matrix3<Complex64> {
    Matrix3::from_fn(|i, j| Complex64::new(r[(i, j)], omega * l[(i, j)]))
}

/// Inverse of the closed-phase sub-block, zero on open phases.
pub(crate) fn embed_complex_inverse(z: &Matrix3<Complex64>, closed: [bool; 3]) -> Matrix3<Complex64> {
    let idx: Vec<usize> = (0..3).filter(|&k| closed[k]).collect();
    let mut out = Matrix3::zeros();
    if idx.is_empty() {
        return out;
    }
    let n = idx.len();
    let sub = DMatrix::from_fn(n, n, |i, j| z[(idx[i], idx[j])]);
    if let Some(inv) = sub.try_inverse() {
        for (i, &p) in idx.iter().enumerate() {
            for (j, &q) in idx.iter().enumerate() {
                out[(p, q)] = inv[(i, j)];
            }
        }
    }
    out
}

/// Phase-domain matrix that keeps only the negative-sequence part of a set.
fn negative_sequence_projector() -> Matrix3<Complex64> {
    let mut p = Matrix3::zeros();
    for k in 0..3 {
        let mut e = [Complex64::default(); 3];
        e[k] = Complex64::new(1.0, 0.0);
        let (_, neg, _) = fortescue(&ComplexPhasorSet::from_array(e));
        let col = inverse_fortescue(Complex64::default(), neg, Complex64::default()).as_array();
        for i in 0..3 {
            p[(i, k)] = col[i];
        }
    }
    p
}

#[derive(Debug, Clone)]
pub struct PmNetwork {
    topo: Topology,
    switch: SwitchState,
    n_nodes: usize,
    omega: f64,
    y: DMatrix<Complex64>,
    /// Norton admittance of each machine source (zero for other kinds or when open).
    source_y: Vec<Matrix3<Complex64>>,
    source_node: Vec<usize>,
    cache: HashMap<SwitchState, (DMatrix<Complex64>, Factor)>,
    factor: Option<Factor>,
}

impl PmNetwork {
    pub fn compile(topo: &Topology) -> Result<Self> {
        topo.validate()?;
        let source_node = topo
            .sources
            .iter()
            .map(|s| topo.bus_index(&s.bus))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self {
            topo: topo.clone(),
            switch: SwitchState::initial(topo),
            n_nodes: topo.buses.len(),
            omega: topo.base().omega_nom(),
            y: DMatrix::zeros(0, 0),
            source_y: vec![Matrix3::zeros(); topo.sources.len()],
            source_node,
            cache: HashMap::new(),
            factor: None,
        };
        net.rebuild()?;
        Ok(net)
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

    pub fn admittance(&self) -> &DMatrix<Complex64> {
        &self.y
    }

    fn assemble(&self) -> Result<(DMatrix<Complex64>, Vec<Matrix3<Complex64>>)> {
        let ckt = Circuit::build(&self.topo, &self.switch)?;
        let w = self.omega;
        let zb = self.topo.base().z_base();
        let n = ckt.n_nodes;
        let mut y = DMatrix::<Complex64>::zeros(3 * n, 3 * n);
        let mut add = |r0: usize, c0: usize, blk: &Matrix3<Complex64>, sign: f64| {
            for i in 0..3 {
                for j in 0..3 {
                    y[(r0 + i, c0 + j)] += blk[(i, j)] * sign;
                }
            }
        };
        for k in 0..n {
            let blk = Matrix3::from_fn(|i, j| Complex64::new(ckt.shunt_g[k][(i, j)], w * ckt.shunt_c[k][(i, j)]));
            add(3 * k, 3 * k, &blk, 1.0);
        }
        let mut source_y = vec![Matrix3::zeros(); self.topo.sources.len()];
        for br in &ckt.branches {
            let ys = embed_complex_inverse(&complex_block(&br.r, &br.l, w), br.closed);
            if let Some(s) = br.source {
                // machines only; converters are current injections in this domain
                if let SourceKind::Machine { neg_seq_ohm, .. } = self.topo.sources[s].kind {
                    let t = br.to.expect("source branch has a bus");
                    let ys = match neg_seq_ohm {
                        Some((r2, x2)) if br.closed.iter().all(|c| *c) => {
                            let y1 = ys[(0, 0)];
                            let y2 = zb / Complex64::new(r2, x2);
                            ys + negative_sequence_projector() * (y2 - y1)
                        }
                        _ => ys,
                    };
                    add(3 * t, 3 * t, &ys, 1.0);
                    source_y[s] = ys;
                }
                continue;
            }
            match (br.from, br.to) {
                (Some(f), Some(t)) => {
                    add(3 * f, 3 * f, &ys, 1.0);
                    add(3 * t, 3 * t, &ys, 1.0);
                    add(3 * f, 3 * t, &ys, -1.0);
                    add(3 * t, 3 * f, &ys, -1.0);
                }
                (Some(f), None) | (None, Some(f)) => add(3 * f, 3 * f, &ys, 1.0),
                (None, None) => {}
            }
        }
        Ok((y, source_y))
    }

    fn rebuild(&mut self) -> Result<()> {
        let (y, source_y) = self.assemble()?;
        self.source_y = source_y;
        if let Some((yc, f)) = self.cache.get(&self.switch) {
            self.y = yc.clone();
            self.factor = Some(f.clone());
            return Ok(());
        }
        let lu = y.clone().lu();
        if !lu.is_invertible() {
            return Err(SimError::SingularNetwork("nodal admittance matrix is singular".into()));
        }
        let f = Rc::new(lu);
        self.cache.insert(self.switch.clone(), (y.clone(), f.clone()));
        self.y = y;
        self.factor = Some(f);
        Ok(())
    }

    /// Node voltages for the given per-source inputs: subtransient EMF for
    /// machines, injected current for converters and current sources.
    pub fn solve(&self, inputs: &[ComplexPhasorSet]) -> Result<Vec<ComplexPhasorSet>> {
        let rhs = self.injection_vector(inputs);
        let v = self
            .factor
            .as_ref()
            .expect("factor is built at compile time")
            .solve(&rhs)
            .ok_or_else(|| SimError::SingularNetwork("solve failed".into()))?;
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SimError::SingularNetwork("non-finite node voltage".into()));
        }
        Ok((0..self.n_nodes)
            .map(|k| ComplexPhasorSet::new(v[3 * k], v[3 * k + 1], v[3 * k + 2]))
            .collect())
    }

    pub fn injection_vector(&self, inputs: &[ComplexPhasorSet]) -> DVector<Complex64> {
        assert_eq!(inputs.len(), self.topo.sources.len());
        let mut rhs = DVector::<Complex64>::zeros(3 * self.n_nodes);
        for (s, inp) in inputs.iter().enumerate() {
            let node = self.source_node[s];
            let v = Vector3::from(inp.as_array());
            let inj = match self.topo.sources[s].kind {
                SourceKind::Machine { .. } => self.source_y[s] * v,
                _ if self.switch.source_closed[s].iter().any(|c| *c) => {
                    let mut i = v;
                    for ph in 0..3 {
                        if !self.switch.source_closed[s][ph] {
                            i[ph] = Complex64::default();
                        }
                    }
                    i
                }
                _ => Vector3::zeros(),
            };
            for ph in 0..3 {
                rhs[3 * node + ph] += inj[ph];
            }
        }
        rhs
    }

    /// Current delivered by a source into its bus.
    pub fn source_current(&self, src: usize, input: &ComplexPhasorSet, v: &[ComplexPhasorSet]) -> ComplexPhasorSet {
        let node = self.source_node[src];
        match self.topo.sources[src].kind {
            SourceKind::Machine { .. } => {
                let e = Vector3::from(input.as_array());
                let vb = Vector3::from(v[node].as_array());
                let i = self.source_y[src] * (e - vb);
                ComplexPhasorSet::new(i[0], i[1], i[2])
            }
            _ => {
                let mut out = input.as_array();
                for ph in 0..3 {
                    if !self.switch.source_closed[src][ph] {
                        out[ph] = Complex64::default();
                    }
                }
                ComplexPhasorSet::from_array(out)
            }
        }
    }

    /// Series current of a line from its `from` end to its `to` end.
    pub fn line_current(&self, line: usize, v: &[ComplexPhasorSet]) -> Result<ComplexPhasorSet> {
        let ckt = Circuit::build(&self.topo, &self.switch)?;
        let br = &ckt.branches[line];
        let ys = embed_complex_inverse(&complex_block(&br.r, &br.l, self.omega), br.closed);
        let f = Vector3::from(v[br.from.unwrap()].as_array());
        let t = Vector3::from(v[br.to.unwrap()].as_array());
        let i = ys * (f - t);
        Ok(ComplexPhasorSet::new(i[0], i[1], i[2]))
    }

    /// Largest KCL mismatch `|Y V - I|` for a solution.
    pub fn residual(&self, inputs: &[ComplexPhasorSet], v: &[ComplexPhasorSet]) -> f64 {
        let rhs = self.injection_vector(inputs);
        let vv = DVector::from_iterator(3 * v.len(), v.iter().flat_map(|s| s.as_array()));
        (&self.y * vv - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max)
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

    pub fn connect_load(&mut self, k: usize, on: bool) -> Result<()> {
        if k >= self.switch.load_on.len() {
            return Err(SimError::UnknownTarget(format!("load #{k}")));
        }
        if self.switch.load_on[k] != on {
            self.switch.load_on[k] = on;
            self.rebuild()?;
        }
        Ok(())
    }

    pub fn open_line_phases(&mut self, line: usize, phases: [bool; 3]) -> Result<()> {
        if line >= self.switch.line_closed.len() {
            return Err(SimError::UnknownTarget(format!("line #{line}")));
        }
        let before = self.switch.line_closed[line];
        for ph in 0..3 {
            if phases[ph] {
                self.switch.line_closed[line][ph] = false;
            }
        }
        if before != self.switch.line_closed[line] {
            self.rebuild()?;
        }
        Ok(())
    }

    pub fn disconnect_source(&mut self, src: usize) -> Result<()> {
        if src >= self.switch.source_closed.len() {
            return Err(SimError::UnknownTarget(format!("source #{src}")));
        }
        if self.switch.source_closed[src] != [false; 3] {
            self.switch.source_closed[src] = [false; 3];
            self.rebuild()?;
        }
        Ok(())
    }

    pub fn source_fully_open(&self, src: usize) -> bool {
        self.switch.source_closed[src].iter().all(|c| !c)
    }
}
