//! Run files: one CSV per run (time column plus one column per signal) and a
//! JSON metadata sidecar with the same stem and a `.meta` extension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scenarios::{RunMetadata, RunResult, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    wall_clock_s: f64,
    metadata: RunMetadata,
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Io(e.to_string())
}

/// Default file stem of a run, e.g. `small_setpoint_pm-full_2.5e-4`.
pub fn run_id(cfg: &ScenarioConfig) -> String {
    format!("{}_{}_{}_{:e}", cfg.system.name(), cfg.test.name(), cfg.model.name(), cfg.dt)
}

/// Floats are written in Rust's shortest round-trip form, so reading back is exact.
pub fn write_csv<W: Write>(run: &RunResult, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["time"];
    header.extend(run.signals.keys().map(String::as_str));
    wr.write_record(&header).map_err(csv_err)?;
    let cols: Vec<&Vec<f64>> = run.signals.values().collect();
    let mut row = Vec::with_capacity(cols.len() + 1);
    for (k, t) in run.time.iter().enumerate() {
        row.clear();
        row.push(t.to_string());
        row.extend(cols.iter().map(|c| c[k].to_string()));
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Time column and signals of a run CSV.
pub fn read_csv<R: Read>(r: R) -> Result<(Vec<f64>, IndexMap<String, Vec<f64>>)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("time") {
        return Err(SimError::Io("first CSV column must be `time`".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut time = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| SimError::Io(format!("row {}: `{s}`: {e}", line + 2)))
        };
        time.push(parse(&rec[0])?);
        for (c, field) in cols.iter_mut().zip(rec.iter().skip(1)) {
            c.push(parse(field)?);
        }
    }
    Ok((time, names.into_iter().zip(cols).collect()))
}

pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

/// Write `<dir>/<id>.csv` and `<dir>/<id>.meta`; returns the CSV path.
pub fn save_run(run: &RunResult, dir: &Path, id: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{id}.csv"));
    write_csv(run, BufWriter::new(File::create(&csv_path)?))?;
    let side = Sidecar {
        wall_clock_s: run.wall_clock_s,
        metadata: run.metadata.clone(),
    };
    let f = BufWriter::new(File::create(meta_path(&csv_path))?);
    serde_json::to_writer_pretty(f, &side).map_err(|e| SimError::Io(e.to_string()))?;
    Ok(csv_path)
}

/// Load a run from its CSV path (or the path without extension).
pub fn load_run(path: &Path) -> Result<RunResult> {
    // stems carry dotted time steps (`..._2.5e-4`), so append rather than replace
    let csv_path = if path.extension().is_some_and(|e| e == "csv") {
        path.to_path_buf()
    } else {
        let mut s = path.as_os_str().to_owned();
        s.push(".csv");
        PathBuf::from(s)
    };
    let open = |p: &Path| File::open(p).map_err(|e| SimError::Io(format!("{}: {e}", p.display())));
    let (time, signals) = read_csv(BufReader::new(open(&csv_path)?))?;
    let f = BufReader::new(open(&meta_path(&csv_path))?);
    let side: Sidecar = serde_json::from_reader(f).map_err(|e| SimError::Io(format!("{}: {e}", csv_path.display())))?;
    Ok(RunResult {
        time,
        signals,
        wall_clock_s: side.wall_clock_s,
        metadata: side.metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{run_scenario, SystemKind, TestId};
    use crate::vsc::VscModel;

    #[test]
    fn run_round_trips_bit_exact() {
        let cfg = ScenarioConfig::new(SystemKind::Small, TestId::Setpoint, VscModel::PmFull, 1e-3).with_duration(0.7);
        let run = run_scenario(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = save_run(&run, dir.path(), &run_id(&cfg)).unwrap();
        assert!(p.ends_with("small_setpoint_pm-full_1e-3.csv"));
        let back = load_run(&p).unwrap();
        assert_eq!(back.time.len(), run.time.len());
        for (name, col) in &run.signals {
            let b = &back.signals[name];
            assert!(col.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), "{name}");
        }
        assert_eq!(back.metadata, run.metadata);
        assert_eq!(back.wall_clock_s, run.wall_clock_s);
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = load_run(Path::new("/nonexistent/run.csv")).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }
}
