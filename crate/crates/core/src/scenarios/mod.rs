//! Test systems, the seven test cases, steady-state initialization and the
//! time-domain run loop for both domains.

mod init;
mod run;
mod systems;

pub use init::{initialize_steady_state, InitialConditions};
pub use run::{run_scenario, run_system, RunMetadata, RunResult};
pub use systems::{
    build_large_system, build_small_system, default_harmonics, HarmonicDef, MachineDef, SystemDef, VscDef,
};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::solver::{Event, EventAction};
use crate::vsc::{VscFeatures, VscModel};

pub const DT_MIN: f64 = 5e-6;
pub const DT_MAX: f64 = 12e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestId {
    Setpoint,
    FreqVolt,
    SymFault,
    AsymFault,
    Harmonics,
    LossGen,
    LineOutage,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Small => "small",
            SystemKind::Large => "large",
        }
    }

    pub fn tests(self) -> &'static [TestId] {
        match self {
            SystemKind::Small => &[
                TestId::Setpoint,
                TestId::FreqVolt,
                TestId::SymFault,
                TestId::AsymFault,
                TestId::Harmonics,
            ],
            SystemKind::Large => &[TestId::AsymFault, TestId::LossGen, TestId::LineOutage],
        }
    }

    pub fn default_duration(self) -> f64 {
        match self {
            SystemKind::Small => 3.5,
            SystemKind::Large => 8.0,
        }
    }

    pub fn build(self) -> SystemDef {
        match self {
            SystemKind::Small => build_small_system(),
            SystemKind::Large => build_large_system(),
        }
    }
}

impl TestId {
    pub const ALL: [TestId; 7] = [
        TestId::Setpoint,
        TestId::FreqVolt,
        TestId::SymFault,
        TestId::AsymFault,
        TestId::Harmonics,
        TestId::LossGen,
        TestId::LineOutage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestId::Setpoint => "setpoint",
            TestId::FreqVolt => "freq_volt",
            TestId::SymFault => "sym_fault",
            TestId::AsymFault => "asym_fault",
            TestId::Harmonics => "harmonics",
            TestId::LossGen => "loss_gen",
            TestId::LineOutage => "line_outage",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(SystemKind::Small),
            "large" => Ok(SystemKind::Large),
            _ => Err(SimError::Config(format!("unknown system `{s}` (expected small or large)"))),
        }
    }
}

impl FromStr for TestId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        TestId::ALL
            .iter()
            .copied()
            .find(|t| t.name() == norm)
            .ok_or_else(|| SimError::Config(format!("unknown test `{s}`")))
    }
}

/// Converter features switched on for a test.
pub fn prescribed_features(system: SystemKind, test: TestId) -> VscFeatures {
    if system == SystemKind::Large {
        return VscFeatures {
            droops: true,
            lvrt: true,
            neg_seq: true,
        };
    }
    VscFeatures {
        droops: test == TestId::FreqVolt,
        lvrt: test == TestId::SymFault,
        neg_seq: test == TestId::AsymFault,
    }
}

fn ev(t: f64, action: EventAction) -> Event {
    Event { t, action }
}

/// Scripted events of a test.
pub fn test_events(system: SystemKind, test: TestId) -> Vec<Event> {
    use EventAction::*;
    let set = |vsc: &str, p: Option<f64>, q: Option<f64>| SetSetpoint {
        vsc: vsc.into(),
        p_mw: p,
        q_mvar: q,
    };
    let fault = |id: &str| ApplyFault { fault: id.into() };
    let clear = |id: &str| ClearFault { fault: id.into() };
    match (system, test) {
        (SystemKind::Small, TestId::Setpoint) => vec![
            ev(0.6, set("VSC1", Some(50.0), None)),
            ev(0.8, set("VSC1", None, Some(30.0))),
        ],
        (SystemKind::Small, TestId::FreqVolt) => vec![ev(1.0, ConnectLoad { load: "LD_STEP".into() })],
        (SystemKind::Small, TestId::SymFault) => vec![ev(2.5, fault("F_SYM")), ev(2.8, clear("F_SYM"))],
        (SystemKind::Small, TestId::AsymFault) => vec![ev(2.5, fault("F_ASYM")), ev(2.8, clear("F_ASYM"))],
        (SystemKind::Small, TestId::Harmonics) => vec![
            ev(0.5, EnableHarmonics { source: "H1".into() }),
            ev(0.6, set("VSC1", Some(50.0), None)),
        ],
        (SystemKind::Large, TestId::AsymFault) => vec![ev(5.0, fault("F_N4")), ev(5.3, clear("F_N4"))],
        (SystemKind::Large, TestId::LossGen) => vec![ev(5.0, DisconnectSource { source: "G1".into() })],
        (SystemKind::Large, TestId::LineOutage) => vec![
            ev(5.0, fault("F_M")),
            ev(
                5.2,
                OpenBreakerPhase {
                    breaker: "BR_A".into(),
                    phases: [true; 3],
                },
            ),
            ev(
                5.25,
                OpenBreakerPhase {
                    breaker: "BR_B".into(),
                    phases: [true; 3],
                },
            ),
        ],
        _ => Vec::new(),
    }
}

/// Dispatch adjustments a test needs before the power flow.
fn prepare_dispatch(system: SystemKind, test: TestId, def: &mut SystemDef) {
    if system == SystemKind::Small && matches!(test, TestId::Setpoint | TestId::Harmonics) {
        for v in &mut def.vscs {
            v.p_mw = 0.0;
            v.q_mvar = 0.0;
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub system: SystemKind,
    pub test: TestId,
    pub model: VscModel,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Replaces the test's prescribed converter features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<VscFeatures>,
    /// System description to load instead of the built-in one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_file: Option<PathBuf>,
    /// Deep-merged into the system description. Array entries are matched by `id`.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub overrides: toml::Table,
    /// Keep every n-th step in the result.
    #[serde(default = "one")]
    pub record_stride: usize,
}

impl ScenarioConfig {
    pub fn new(system: SystemKind, test: TestId, model: VscModel, dt: f64) -> Self {
        Self {
            system,
            test,
            model,
            dt,
            duration: None,
            features: None,
            system_file: None,
            overrides: toml::Table::new(),
            record_stride: 1,
        }
    }

    pub fn with_duration(mut self, d: f64) -> Self {
        self.duration = Some(d);
        self
    }

    pub fn with_stride(mut self, n: usize) -> Self {
        self.record_stride = n.max(1);
        self
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| self.system.default_duration())
    }

    pub fn features(&self) -> VscFeatures {
        self.features.unwrap_or_else(|| prescribed_features(self.system, self.test))
    }

    pub fn events(&self) -> Vec<Event> {
        test_events(self.system, self.test)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| SimError::Config(format!("scenario config: {e}")))
    }

    /// Read a scenario file; a relative `system_file` is resolved against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(sf) = &cfg.system_file {
            if sf.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.system_file = Some(dir.join(sf));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt >= DT_MIN * (1.0 - 1e-9) && self.dt <= DT_MAX * (1.0 + 1e-9)) {
            return Err(SimError::Config(format!(
                "dt = {:e} s outside the supported range [{DT_MIN:e}, {DT_MAX:e}] s",
                self.dt
            )));
        }
        if !self.system.tests().contains(&self.test) {
            return Err(SimError::Config(format!(
                "test {} is not defined for the {} system",
                self.test, self.system
            )));
        }
        let d = self.duration();
        if !(d > self.dt) || !d.is_finite() {
            return Err(SimError::Config(format!("duration {d} s must exceed dt")));
        }
        if self.record_stride == 0 {
            return Err(SimError::Config("record_stride must be at least 1".into()));
        }
        self.system_def()?.validate()
    }

    /// The system description for this run, with dispatch and overrides applied.
    pub fn system_def(&self) -> Result<SystemDef> {
        let mut def = match &self.system_file {
            Some(p) => load_system(p)?,
            None => self.system.build(),
        };
        prepare_dispatch(self.system, self.test, &mut def);
        if !self.overrides.is_empty() {
            def = apply_overrides(&def, &self.overrides)?;
        }
        Ok(def)
    }
}

pub fn load_system(path: &Path) -> Result<SystemDef> {
    let text = std::fs::read_to_string(path)?;
    system_from_toml(&text)
}

pub fn system_from_toml(text: &str) -> Result<SystemDef> {
    toml::from_str(text).map_err(|e| SimError::Config(format!("system description: {e}")))
}

pub fn system_to_toml(def: &SystemDef) -> Result<String> {
    toml::to_string_pretty(def).map_err(|e| SimError::Config(format!("system description: {e}")))
}

fn merge(base: &mut toml::Value, patch: &toml::Value, path: &str) -> Result<()> {
    use toml::Value;
    match (base, patch) {
        (Value::Table(b), Value::Table(p)) => {
            for (k, v) in p {
                let sub = format!("{path}.{k}");
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v, &sub)?,
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (Value::Array(b), Value::Array(p)) if p.iter().all(|x| x.get("id").is_some()) && !p.is_empty() => {
            for item in p {
                let id = item.get("id").and_then(|v| v.as_str()).unwrap_or_default();
                let slot = b
                    .iter_mut()
                    .find(|x| x.get("id").and_then(|v| v.as_str()) == Some(id))
                    .ok_or_else(|| SimError::UnknownTarget(format!("override {path}: no entry with id `{id}`")))?;
                merge(slot, item, &format!("{path}[{id}]"))?;
            }
        }
        (b, p) => *b = p.clone(),
    }
    Ok(())
}

/// Deep-merge `patch` into `def`.
pub fn apply_overrides(def: &SystemDef, patch: &toml::Table) -> Result<SystemDef> {
    let mut v = toml::Value::try_from(def).map_err(|e| SimError::Config(format!("overrides: {e}")))?;
    merge(&mut v, &toml::Value::Table(patch.clone()), "")?;
    v.try_into().map_err(|e| SimError::Config(format!("overrides: {e}")))
}
