//! Command-line front end. Every command is a thin wrapper over the library.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
//! 3 numerical divergence in a single run, 4 I/O error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    self, bandwidth_sweep, benchmark, compare, default_dt_grid, execution_benchmark, guideline_report, spans_differ,
    timestep_sweep, Bandwidth, ComparisonSpec, SweepResult, SweepSpec,
};
use crate::error::{Result, SimError};
use crate::io::{load_run, run_id, save_run};
use crate::plot::{loglog_svg, overlay_svg};
use crate::scenarios::{load_system, run_scenario, ScenarioConfig, SystemKind, TestId, RunResult};
use crate::vsc::{tune_gains, VscModel};

#[derive(Debug, Parser)]
#[command(name = "vscsim", version, about = "EMT and phasor-mode simulation of grid-following converters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its CSV and metadata.
    Run(RunArgs),
    /// RMSE of every model and time step against the 5 us EMT reference.
    Sweep(SweepArgs),
    /// Wall-clock timing over time steps.
    Bench(BenchArgs),
    /// Overlay two stored runs and report their RMSE.
    Compare(CompareArgs),
    /// Check scenario or system files without running them.
    Validate(ValidateArgs),
    /// List systems, tests, models and signals.
    List,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory (created if absent).
    #[arg(long, env = "VSCSIM_OUT_DIR", default_value = "out")]
    pub out_dir: PathBuf,
    /// Skip SVG output.
    #[arg(long)]
    pub no_plots: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file; command-line flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_system)]
    pub system: Option<SystemKind>,
    #[arg(long, value_parser = parse_test)]
    pub test: Option<TestId>,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<VscModel>,
    /// Time step in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulated time in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Keep every n-th sample.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Output file stem; defaults to system_test_model_dt.
    #[arg(long)]
    pub id: Option<String>,
    /// Run twice and fail unless both results are identical.
    #[arg(long)]
    pub check_determinism: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_parser = parse_system)]
    pub system: SystemKind,
    #[arg(long, value_parser = parse_test)]
    pub test: TestId,
    /// Comma-separated models (default: all five).
    #[arg(long, value_delimiter = ',', value_parser = parse_model)]
    pub models: Vec<VscModel>,
    /// Comma-separated time steps (default: 20 per decade plus the named steps).
    #[arg(long, value_delimiter = ',')]
    pub dts: Vec<f64>,
    /// Comma-separated signals (default depends on the test).
    #[arg(long, value_delimiter = ',')]
    pub signals: Vec<String>,
    /// Comparison window `t0,t1` in seconds.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub window: Option<Vec<f64>>,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Vary a converter bandwidth: omega_c or omega_pq.
    #[arg(long, value_parser = parse_bandwidth, requires = "values")]
    pub bandwidth: Option<Bandwidth>,
    /// Comma-separated bandwidth values in rad/s.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_parser = parse_system)]
    pub system: SystemKind,
    #[arg(long, value_parser = parse_test)]
    pub test: TestId,
    #[arg(long, value_delimiter = ',', value_parser = parse_model, default_value = "pm-full")]
    pub models: Vec<VscModel>,
    #[arg(long, value_delimiter = ',', default_value = "1e-5,1e-4,1e-3")]
    pub dts: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference run (CSV path or stem).
    pub a: PathBuf,
    /// Candidate run.
    pub b: PathBuf,
    #[arg(long)]
    pub signal: String,
    /// Normalization base (default: the signal's rated value).
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub window: Option<Vec<f64>>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Scenario or system description files.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
}

fn parse_system(s: &str) -> std::result::Result<SystemKind, SimError> {
    s.parse()
}

fn parse_test(s: &str) -> std::result::Result<TestId, SimError> {
    s.parse()
}

fn parse_model(s: &str) -> std::result::Result<VscModel, SimError> {
    s.parse()
}

fn parse_bandwidth(s: &str) -> std::result::Result<Bandwidth, SimError> {
    match s.replace('-', "_").as_str() {
        "omega_c" => Ok(Bandwidth::OmegaC),
        "omega_pq" => Ok(Bandwidth::OmegaPq),
        _ => Err(SimError::Config(format!("unknown bandwidth `{s}` (omega_c or omega_pq)"))),
    }
}

fn window(w: &Option<Vec<f64>>) -> Option<(f64, f64)> {
    w.as_ref().map(|v| (v[0], v[1]))
}

/// Scenario from an optional file plus flag overrides.
pub fn scenario_from_args(a: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &a.config {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => {
            let missing = |f: &str| SimError::Config(format!("--{f} is required without --config"));
            ScenarioConfig::new(
                a.system.ok_or_else(|| missing("system"))?,
                a.test.ok_or_else(|| missing("test"))?,
                a.model.ok_or_else(|| missing("model"))?,
                a.dt.ok_or_else(|| missing("dt"))?,
            )
        }
    };
    if let Some(s) = a.system {
        cfg.system = s;
    }
    if let Some(t) = a.test {
        cfg.test = t;
    }
    if let Some(m) = a.model {
        cfg.model = m;
    }
    if let Some(dt) = a.dt {
        cfg.dt = dt;
    }
    if a.duration.is_some() {
        cfg.duration = a.duration;
    }
    if let Some(s) = a.stride {
        cfg.record_stride = s;
    }
    Ok(cfg)
}

fn summary(run: &RunResult) -> String {
    let mut parts = Vec::new();
    for (name, col) in &run.signals {
        if name.ends_with(".P_ac") || name.ends_with(".Q_ac") || name.ends_with(".f") {
            let scale = if name.ends_with(".f") { 1.0 } else { 1e-6 };
            parts.push(format!("{name}={:.4}", col.last().copied().unwrap_or(f64::NAN) * scale));
        }
    }
    format!("final {} (MW, Mvar, Hz); wall clock {:.3} s", parts.join(" "), run.wall_clock_s)
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let cfg = scenario_from_args(a)?;
    let run = run_scenario(&cfg)?;
    if a.check_determinism {
        let again = run_scenario(&cfg)?;
        if again.signals != run.signals || again.time != run.time {
            return Err(SimError::Config("repeated run produced different samples".into()));
        }
    }
    let id = a.id.clone().unwrap_or_else(|| run_id(&cfg));
    let path = save_run(&run, &a.out.out_dir, &id)?;
    println!("{}: {}", path.display(), summary(&run));
    if !a.out.no_plots {
        let vscs: Vec<&str> = run.signals.keys().filter_map(|k| k.strip_suffix(".P_ac")).collect();
        for v in vscs {
            let p = format!("{v}.P_ac");
            let q = format!("{v}.Q_ac");
            let series = [
                (p.clone(), run.time.as_slice(), run.signal(&p)?),
                (q.clone(), run.time.as_slice(), run.signal(&q)?),
            ];
            let svg = a.out.out_dir.join(format!("{id}_{v}_PQ.svg"));
            overlay_svg(&svg, &format!("{id} {v}"), "MW, Mvar", &series, &cfg.model.to_string())?;
        }
    }
    Ok(())
}

fn sweep_plots(sweep: &SweepResult, dir: &Path, stem: &str) -> Result<()> {
    for sig in &sweep.signals {
        let mut series = Vec::new();
        for param in sweep.params() {
            for m in sweep.models() {
                let label = match param {
                    Some(w) => format!("{m} ({w:.0} rad/s)"),
                    None => m.to_string(),
                };
                series.push((label, sweep.series(m, sig, param)));
            }
        }
        let path = dir.join(format!("{stem}_{}.svg", sig.replace('.', "_")));
        let title = format!("{} {} - {sig} RMSE", sweep.system, sweep.test);
        loglog_svg(&path, &title, "time step (s)", "normalized RMSE", &series)?;
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut spec = SweepSpec::new(a.system, a.test);
    if !a.models.is_empty() {
        spec.models = a.models.clone();
    }
    spec.dt_grid = if a.dts.is_empty() { default_dt_grid() } else { a.dts.clone() };
    if !a.signals.is_empty() {
        spec.signals = a.signals.clone();
    }
    spec.window = window(&a.window);
    spec.duration = a.duration;
    spec.jobs = a.jobs;
    let sweep = match a.bandwidth {
        Some(b) => bandwidth_sweep(&spec, b, &a.values)?,
        None => timestep_sweep(&spec)?,
    };
    std::fs::create_dir_all(&a.out.out_dir)?;
    let stem = format!("sweep_{}_{}", a.system.name(), a.test.name());
    let csv_path = a.out.out_dir.join(format!("{stem}.csv"));
    sweep.save_csv(&csv_path)?;
    let timing = std::fs::File::create(a.out.out_dir.join(format!("{stem}_timing.csv")))?;
    execution_benchmark(&sweep).write_csv(timing)?;
    let gains = tune_gains(&spec_params(&spec)?);
    let report = guideline_report(&sweep, &gains)?;
    std::fs::write(a.out.out_dir.join(format!("{stem}_guideline.txt")), report.to_string())?;
    if !a.out.no_plots {
        sweep_plots(&sweep, &a.out.out_dir, &stem)?;
    }
    println!("{}", csv_path.display());
    print!("{report}");
    Ok(())
}

fn spec_params(spec: &SweepSpec) -> Result<crate::vsc::VscParams> {
    let def = ScenarioConfig::new(spec.system, spec.test, VscModel::EmtAvg, analysis::REFERENCE_DT).system_def()?;
    def.vscs
        .first()
        .map(|v| v.params)
        .ok_or_else(|| SimError::Config("system has no converter".into()))
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let b = benchmark(a.system, a.test, &a.models, &a.dts, a.repeats)?;
    std::fs::create_dir_all(&a.out.out_dir)?;
    let path = a
        .out
        .out_dir
        .join(format!("bench_{}_{}.csv", a.system.name(), a.test.name()));
    b.write_csv(std::fs::File::create(&path)?)?;
    println!("{:<8} {:>10} {:>12} {:>8}", "model", "dt (s)", "wall (s)", "speedup");
    for r in &b.rows {
        println!("{:<8} {:>10.2e} {:>12.4} {:>8.1}", r.model.name(), r.dt, r.wall_clock_s, r.speedup);
    }
    Ok(())
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let ra = load_run(&a.a)?;
    let rb = load_run(&a.b)?;
    if spans_differ(&ra, &rb) {
        eprintln!("warning: runs cover different time spans; comparing the overlap only");
    }
    let spec = ComparisonSpec {
        signal: a.signal.clone(),
        base: a.base,
        window: window(&a.window),
    };
    let r = compare(&ra, &rb, &spec)?;
    println!("RMSE {} = {r:.6e}", a.signal);
    if !a.out.no_plots {
        std::fs::create_dir_all(&a.out.out_dir)?;
        let stem = |p: &Path| {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            name.strip_suffix(".csv").map(str::to_string).unwrap_or(name)
        };
        let path = a
            .out
            .out_dir
            .join(format!("compare_{}_{}_{}.svg", stem(&a.a), stem(&a.b), a.signal.replace('.', "_")));
        let series = [
            (stem(&a.a), ra.time.as_slice(), ra.signal(&a.signal)?),
            (stem(&a.b), rb.time.as_slice(), rb.signal(&a.signal)?),
        ];
        overlay_svg(&path, &a.signal, &a.signal, &series, &format!("RMSE {r:.3e}"))?;
        println!("{}", path.display());
    }
    Ok(())
}

/// Validate one scenario or system description file.
pub fn validate_file(path: &Path) -> Result<&'static str> {
    let text = std::fs::read_to_string(path)?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
    if table.contains_key("buses") {
        load_system(path)?.validate()?;
        Ok("system")
    } else {
        ScenarioConfig::from_file(path)?.validate()?;
        Ok("scenario")
    }
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    for p in &a.paths {
        let kind = validate_file(p).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", p.display())),
            other => other,
        })?;
        println!("{}: ok ({kind})", p.display());
    }
    Ok(())
}

fn cmd_list() -> Result<()> {
    for s in [SystemKind::Small, SystemKind::Large] {
        let tests: Vec<&str> = s.tests().iter().map(|t| t.name()).collect();
        println!("system {}: tests {}", s.name(), tests.join(", "));
    }
    let models: Vec<&str> = VscModel::ALL.iter().map(|m| m.name()).collect();
    println!("models: {}", models.join(", "));
    for s in [SystemKind::Small, SystemKind::Large] {
        let def = s.build();
        let mut sig = Vec::new();
        for v in &def.vscs {
            sig.push(format!("{}.{{P_ac,Q_ac,iq_pos,id_pos,iq_neg,id_neg,vq_pos,vd_pos,vq_neg,vd_neg,iq_ref,id_ref,f,lvrt,Ia,Ib,Ic}}", v.id));
        }
        for m in &def.machines {
            sig.push(format!("{}.{{T_e,omega_m}}", m.id));
        }
        sig.push(format!("{{{}}}.{{Va,Vb,Vc}}", def.buses.join(",")));
        println!("signals ({}): {}", s.name(), sig.join(" "));
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Validate(a) => cmd_validate(a),
        Command::List => cmd_list(),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use std::path::PathBuf;

    fn configs_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
    }

    #[test]
    fn shipped_configs_validate() {
        let mut n = 0;
        for dir in [configs_dir(), configs_dir().join("tests")] {
            for e in std::fs::read_dir(dir).unwrap() {
                let p = e.unwrap().path();
                if p.extension().is_some_and(|x| x == "toml") {
                    validate_file(&p).unwrap();
                    n += 1;
                }
            }
        }
        assert_eq!(n, 10);
    }

    #[test]
    fn shipped_systems_match_builders() {
        assert_eq!(load_system(&configs_dir().join("small.toml")).unwrap(), SystemKind::Small.build());
        assert_eq!(load_system(&configs_dir().join("large.toml")).unwrap(), SystemKind::Large.build());
    }

    #[test]
    fn reactance_ordering_violation_rejected() {
        let text = std::fs::read_to_string(configs_dir().join("small.toml")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.toml");
        std::fs::write(&p, text.replace("xd_st = 0.292", "xd_st = 0.5")).unwrap();
        let e = validate_file(&p).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["vscsim", "run", "--model", "pm-bogus"]), 2);
        assert_eq!(main_with_args(["vscsim"]), 2);
    }

    #[test]
    fn dt_outside_range_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let code = main_with_args([
            "vscsim", "run", "--system", "small", "--test", "setpoint", "--model", "pm-i0", "--dt", "20e-3", "--out-dir",
            out,
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn missing_config_is_io_error() {
        assert_eq!(main_with_args(["vscsim", "validate", "/nonexistent/x.toml"]), 4);
    }
}
