use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rmse_resampled, DEFAULT_RMSE_CAP, REFERENCE_DT};
use crate::error::{Result, SimError};
use crate::scenarios::{apply_overrides, run_system, RunResult, ScenarioConfig, SystemDef, SystemKind, TestId, DT_MAX, DT_MIN};
use crate::vsc::VscModel;

/// Time steps plotted in the published figures (s).
pub const NAMED_STEPS: [f64; 9] = [25e-6, 250e-6, 2500e-6, 350e-6, 600e-6, 650e-6, 700e-6, 750e-6, 850e-6];

/// Twenty logarithmic points per decade over the allowed range plus the named steps.
pub fn default_dt_grid() -> Vec<f64> {
    let decades = (DT_MAX / DT_MIN).log10();
    let n = (decades * 20.0).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| DT_MIN * 10f64.powf(k as f64 / 20.0)).collect();
    g.push(DT_MAX);
    g.extend_from_slice(&NAMED_STEPS);
    normalize_grid(g)
}

fn normalize_grid(mut g: Vec<f64>) -> Vec<f64> {
    // round to whole nanoseconds so grid values print cleanly
    for x in &mut g {
        *x = (*x * 1e9).round() / 1e9;
    }
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    g
}

/// Signals compared by default for each test.
pub fn default_signals(system: SystemKind, test: TestId) -> Vec<String> {
    let names: &[&str] = match (system, test) {
        (SystemKind::Small, TestId::Setpoint | TestId::Harmonics) => &["VSC1.P_ac", "VSC1.iq_pos", "VSC1.Q_ac"],
        (SystemKind::Small, TestId::FreqVolt) => &["VSC1.P_ac", "SG1.omega_m", "VSC1.f"],
        (SystemKind::Small, TestId::SymFault) => &["VSC1.id_pos", "VSC1.iq_pos", "VSC1.P_ac"],
        (SystemKind::Small, TestId::AsymFault) => &["VSC1.iq_neg", "VSC1.id_neg", "VSC1.id_pos"],
        (SystemKind::Large, _) => &["VSC1.id_pos", "VSC1.iq_pos", "VSC1.P_ac", "G0.omega_m"],
        _ => &["VSC1.P_ac"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Which converter bandwidth a bandwidth sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    OmegaC,
    OmegaPq,
}

impl Bandwidth {
    pub fn key(self) -> &'static str {
        match self {
            Bandwidth::OmegaC => "omega_c",
            Bandwidth::OmegaPq => "omega_pq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub system: SystemKind,
    pub test: TestId,
    pub models: Vec<VscModel>,
    pub dt_grid: Vec<f64>,
    pub signals: Vec<String>,
    pub window: Option<(f64, f64)>,
    pub cap: f64,
    pub duration: Option<f64>,
    /// Applied to every run, reference included.
    pub overrides: toml::Table,
    /// Record stride of the reference run.
    pub reference_stride: usize,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl SweepSpec {
    pub fn new(system: SystemKind, test: TestId) -> Self {
        Self {
            system,
            test,
            models: VscModel::ALL.to_vec(),
            dt_grid: default_dt_grid(),
            signals: default_signals(system, test),
            window: None,
            cap: DEFAULT_RMSE_CAP,
            duration: None,
            overrides: toml::Table::new(),
            reference_stride: 1,
            jobs: None,
        }
    }

    fn config(&self, model: VscModel, dt: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::new(self.system, self.test, model, dt);
        c.duration = self.duration;
        c.overrides = self.overrides.clone();
        c
    }

    fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.dt_grid.is_empty() || self.signals.is_empty() {
            return Err(SimError::Config("sweep needs at least one model, time step and signal".into()));
        }
        if self.dt_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::Config("time-step grid must be strictly increasing".into()));
        }
        if !(self.cap > 0.0) {
            return Err(SimError::Config("RMSE cap must be positive".into()));
        }
        for &dt in &self.dt_grid {
            self.config(self.models[0], dt).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub model: VscModel,
    pub dt: f64,
    /// Bandwidth value for bandwidth sweeps.
    pub param: Option<f64>,
    /// Normalized RMSE per signal (capped).
    pub rmse: IndexMap<String, f64>,
    pub wall_clock_s: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub system: SystemKind,
    pub test: TestId,
    pub signals: Vec<String>,
    pub bandwidth: Option<Bandwidth>,
    pub cap: f64,
    /// Wall clock of the reference run per bandwidth value (single entry otherwise).
    pub reference_wall_clock_s: Vec<f64>,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// `(dt, rmse)` pairs of one model and signal, sorted by dt.
    pub fn series(&self, model: VscModel, signal: &str, param: Option<f64>) -> Vec<(f64, f64)> {
        let mut s: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.model == model && p.param == param)
            .filter_map(|p| p.rmse.get(signal).map(|r| (p.dt, *r)))
            .collect();
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        s
    }

    pub fn point(&self, model: VscModel, dt: f64, param: Option<f64>) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.model == model && p.param == param && (p.dt - dt).abs() <= 1e-9 * dt)
    }

    pub fn models(&self) -> Vec<VscModel> {
        let mut m: Vec<VscModel> = self.points.iter().map(|p| p.model).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn params(&self) -> Vec<Option<f64>> {
        let mut out: Vec<Option<f64>> = Vec::new();
        for p in &self.points {
            if !out.contains(&p.param) {
                out.push(p.param);
            }
        }
        out
    }

    /// CSV with columns model, dt, signal, rmse, wall_clock_s, diverged
    /// (plus the bandwidth column for bandwidth sweeps).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| SimError::Io(e.to_string());
        let mut header = vec!["model", "dt", "signal", "rmse", "wall_clock_s", "diverged"];
        if let Some(b) = self.bandwidth {
            header.push(b.key());
        }
        wr.write_record(&header).map_err(io)?;
        for p in &self.points {
            for (sig, r) in &p.rmse {
                let mut rec = vec![
                    p.model.name().to_string(),
                    p.dt.to_string(),
                    sig.clone(),
                    r.to_string(),
                    p.wall_clock_s.to_string(),
                    p.diverged.to_string(),
                ];
                if self.bandwidth.is_some() {
                    rec.push(p.param.map(|x| x.to_string()).unwrap_or_default());
                }
                wr.write_record(&rec).map_err(io)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

struct Reference {
    time: Vec<f64>,
    series: Vec<Vec<f64>>,
    bases: Vec<f64>,
}

impl Reference {
    fn from_run(run: RunResult, signals: &[String]) -> Result<Self> {
        let series = signals.iter().map(|s| run.signal(s).map(|x| x.to_vec())).collect::<Result<_>>()?;
        let bases = signals.iter().map(|s| run.base(s)).collect();
        Ok(Self {
            time: run.time,
            series,
            bases,
        })
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SimError::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn evaluate(
    spec: &SweepSpec,
    def: &SystemDef,
    reference: &Reference,
    model: VscModel,
    dt: f64,
    param: Option<f64>,
) -> Result<SweepPoint> {
    let cfg = spec.config(model, dt);
    let (rmse, wall, diverged) = match run_system(&cfg, def) {
        Ok(run) => {
            let mut out = IndexMap::new();
            let mut bad = false;
            for (k, sig) in spec.signals.iter().enumerate() {
                let r = rmse_resampled(
                    &reference.time,
                    &reference.series[k],
                    &run.time,
                    run.signal(sig)?,
                    reference.bases[k],
                    spec.window,
                )?;
                let r = if r.is_finite() { r.min(spec.cap) } else { spec.cap };
                bad |= !run.signal(sig)?.iter().all(|x| x.is_finite());
                out.insert(sig.clone(), r);
            }
            (out, run.wall_clock_s, bad)
        }
        Err(SimError::NumericalDivergence { .. }) => {
            let out = spec.signals.iter().map(|s| (s.clone(), spec.cap)).collect();
            (out, f64::NAN, true)
        }
        Err(e) => return Err(e),
    };
    Ok(SweepPoint {
        model,
        dt,
        param,
        rmse,
        wall_clock_s: wall,
        diverged,
    })
}

fn run_grid(spec: &SweepSpec, def: &SystemDef, param: Option<f64>) -> Result<(f64, Vec<SweepPoint>)> {
    let ref_cfg = spec.config(VscModel::EmtAvg, REFERENCE_DT).with_stride(spec.reference_stride);
    let ref_run = run_system(&ref_cfg, def)?;
    let ref_wall = ref_run.wall_clock_s;
    let reference = Reference::from_run(ref_run, &spec.signals)?;
    let grid: Vec<(VscModel, f64)> = spec
        .models
        .iter()
        .flat_map(|&m| spec.dt_grid.iter().map(move |&dt| (m, dt)))
        .collect();
    let points = with_pool(spec.jobs, || {
        grid.par_iter()
            .map(|&(m, dt)| evaluate(spec, def, &reference, m, dt, param))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok((ref_wall, points))
}

/// RMSE of every (model, dt) against the EMT reference at 5 μs.
pub fn timestep_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let def = spec.config(VscModel::EmtAvg, REFERENCE_DT).system_def()?;
    let (ref_wall, points) = run_grid(spec, &def, None)?;
    Ok(SweepResult {
        system: spec.system,
        test: spec.test,
        signals: spec.signals.clone(),
        bandwidth: None,
        cap: spec.cap,
        reference_wall_clock_s: vec![ref_wall],
        points,
    })
}

/// Time-step sweep repeated for each value of one converter bandwidth
/// (applied to every converter). Each value gets its own reference run.
pub fn bandwidth_sweep(spec: &SweepSpec, which: Bandwidth, values: &[f64]) -> Result<SweepResult> {
    spec.validate()?;
    if values.is_empty() {
        return Err(SimError::Config("bandwidth grid is empty".into()));
    }
    let base = spec.config(VscModel::EmtAvg, REFERENCE_DT).system_def()?;
    let mut points = Vec::new();
    let mut walls = Vec::new();
    for &w in values {
        let def = with_bandwidth(&base, which, w)?;
        def.validate()?;
        let (ref_wall, mut p) = run_grid(spec, &def, Some(w))?;
        walls.push(ref_wall);
        points.append(&mut p);
    }
    Ok(SweepResult {
        system: spec.system,
        test: spec.test,
        signals: spec.signals.clone(),
        bandwidth: Some(which),
        cap: spec.cap,
        reference_wall_clock_s: walls,
        points,
    })
}

fn with_bandwidth(def: &SystemDef, which: Bandwidth, value: f64) -> Result<SystemDef> {
    let mut vscs = toml::value::Array::new();
    for v in &def.vscs {
        let mut params = toml::Table::new();
        params.insert(which.key().into(), toml::Value::Float(value));
        let mut entry = toml::Table::new();
        entry.insert("id".into(), toml::Value::String(v.id.clone()));
        entry.insert("params".into(), toml::Value::Table(params));
        vscs.push(toml::Value::Table(entry));
    }
    let mut patch = toml::Table::new();
    patch.insert("vscs".into(), toml::Value::Array(vscs));
    apply_overrides(def, &patch)
}
