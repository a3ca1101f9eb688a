use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::sweep::SweepResult;
use crate::error::{Result, SimError};
use crate::scenarios::{run_system, ScenarioConfig, SystemKind, TestId};
use crate::vsc::{VscGains, VscModel};

/// RMSE growth over the small-dt floor that marks the knee.
pub const KNEE_FACTOR: f64 = 2.0;

/// Floor used when a model's best RMSE is essentially zero.
const KNEE_ABS_FLOOR: f64 = 1e-3;

/// Largest time step before the RMSE leaves its small-dt floor: the step
/// preceding the first grid point whose RMSE exceeds `KNEE_FACTOR` times the
/// floor. `None` when the first point already fails; the last dt when none does.
pub fn knee_dt(series: &[(f64, f64)]) -> Option<f64> {
    let floor = series.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).max(KNEE_ABS_FLOOR);
    let limit = KNEE_FACTOR * floor;
    let first_bad = series.iter().position(|p| !(p.1 <= limit));
    match first_bad {
        Some(0) => None,
        Some(k) => Some(series[k - 1].0),
        None => series.last().map(|p| p.0),
    }
}

/// Smallest time constant the model resolves: the inner current loop for
/// the models that keep it, the outer power loop otherwise.
pub fn model_time_constant(model: VscModel, gains: &VscGains) -> f64 {
    match model {
        VscModel::EmtAvg | VscModel::PmFull | VscModel::PmI1 => gains.tau_c,
        VscModel::PmI0 | VscModel::PmPq1 => gains.tau_pq,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineEntry {
    pub model: VscModel,
    pub signal: String,
    pub tau_min: f64,
    /// Recommended band `[τ_min/10, τ_min/5]`.
    pub dt_low: f64,
    pub dt_high: f64,
    pub knee_dt: Option<f64>,
    /// Knee further than a factor 2 from `τ_min/5`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineReport {
    pub entries: Vec<GuidelineEntry>,
}

impl GuidelineReport {
    pub fn flagged(&self) -> impl Iterator<Item = &GuidelineEntry> {
        self.entries.iter().filter(|e| e.flagged)
    }
}

impl fmt::Display for GuidelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:<14} {:>10} {:>20} {:>10}  flag", "model", "signal", "tau_min", "recommended dt", "knee dt")?;
        for e in &self.entries {
            let knee = e.knee_dt.map(|k| format!("{:.0} us", k * 1e6)).unwrap_or_else(|| "-".into());
            writeln!(
                f,
                "{:<8} {:<14} {:>7.0} us {:>8.0}-{:<6.0} us {:>10}  {}",
                e.model.name(),
                e.signal,
                e.tau_min * 1e6,
                e.dt_low * 1e6,
                e.dt_high * 1e6,
                knee,
                if e.flagged { "CONTRADICTS RULE" } else { "ok" }
            )?;
        }
        Ok(())
    }
}

/// Compare each model's measured knee with the "five to ten times smaller
/// than the smallest time constant" rule, using the sweep's first signal.
pub fn guideline_report(sweep: &SweepResult, gains: &VscGains) -> Result<GuidelineReport> {
    let signal = sweep
        .signals
        .first()
        .ok_or_else(|| SimError::Config("sweep has no signals".into()))?;
    let param = sweep.params().first().copied().flatten();
    let entries = sweep
        .models()
        .into_iter()
        .map(|model| {
            let tau = model_time_constant(model, gains);
            let knee = knee_dt(&sweep.series(model, signal, param));
            let target = tau / 5.0;
            let flagged = match knee {
                Some(k) => k < target / 2.0 || k > target * 2.0,
                None => true,
            };
            GuidelineEntry {
                model,
                signal: signal.clone(),
                tau_min: tau,
                dt_low: tau / 10.0,
                dt_high: tau / 5.0,
                knee_dt: knee,
                flagged,
            }
        })
        .collect();
    Ok(GuidelineReport { entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: VscModel,
    pub dt: f64,
    pub wall_clock_s: f64,
    /// Wall clock of the model's smallest dt divided by this one.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub rows: Vec<BenchRow>,
}

impl Benchmark {
    fn from_times(mut times: Vec<(VscModel, f64, f64)>) -> Self {
        times.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut rows = Vec::with_capacity(times.len());
        for (model, dt, wall) in &times {
            let base = times
                .iter()
                .find(|(m, _, w)| m == model && w.is_finite())
                .map(|x| x.2)
                .unwrap_or(f64::NAN);
            rows.push(BenchRow {
                model: *model,
                dt: *dt,
                wall_clock_s: *wall,
                speedup: base / wall,
            });
        }
        Self { rows }
    }

    pub fn wall(&self, model: VscModel, dt: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && (r.dt - dt).abs() <= 1e-9 * dt)
            .map(|r| r.wall_clock_s)
    }

    /// Ratio of wall clock at `dt_a` to wall clock at `dt_b`.
    pub fn speedup(&self, model: VscModel, dt_a: f64, dt_b: f64) -> Option<f64> {
        Some(self.wall(model, dt_a)? / self.wall(model, dt_b)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| SimError::Io(e.to_string());
        wr.write_record(["model", "dt", "wall_clock_s", "speedup"]).map_err(io)?;
        for r in &self.rows {
            wr.write_record([
                r.model.name().to_string(),
                r.dt.to_string(),
                r.wall_clock_s.to_string(),
                r.speedup.to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Wall-clock table of the runs in a sweep. Divergent runs appear with NaN.
pub fn execution_benchmark(sweep: &SweepResult) -> Benchmark {
    let times = sweep
        .points
        .iter()
        .filter(|p| p.param == sweep.params().first().copied().flatten())
        .map(|p| (p.model, p.dt, p.wall_clock_s))
        .collect();
    Benchmark::from_times(times)
}

/// Time runs sequentially, keeping the fastest of `repeats` per point.
pub fn benchmark(system: SystemKind, test: TestId, models: &[VscModel], dts: &[f64], repeats: usize) -> Result<Benchmark> {
    let mut times = Vec::new();
    for &model in models {
        for &dt in dts {
            let cfg = ScenarioConfig::new(system, test, model, dt).with_stride(usize::MAX);
            cfg.validate()?;
            let def = cfg.system_def()?;
            let mut best = f64::INFINITY;
            for _ in 0..repeats.max(1) {
                match run_system(&cfg, &def) {
                    Ok(r) => best = best.min(r.wall_clock_s),
                    Err(SimError::NumericalDivergence { .. }) => best = f64::NAN,
                    Err(e) => return Err(e),
                }
            }
            times.push((model, dt, best));
        }
    }
    Ok(Benchmark::from_times(times))
}
