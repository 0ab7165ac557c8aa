//! Result files: per-solve CSV, JSON summary and convergence traces.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::{Scene, SolutionState};
use crate::solve::{BaselineKind, SolveTrace};
use crate::sweep::{RunSummary, SolveRecord, SweepRun};

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Serializable view of one solution. Complex numbers are `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub scheme: BaselineKind,
    pub seed: u64,
    pub replicate: u64,
    pub wsr: f64,
    pub rates: Vec<f64>,
    pub power_w: f64,
    pub iterations: usize,
    pub converged: bool,
    pub freqs_hz: Vec<f64>,
    pub delays_s: Option<Vec<f64>>,
    pub phases: Vec<[f64; 2]>,
    pub beams: Vec<Vec<[f64; 2]>>,
}

impl SolutionReport {
    /// `scene` must be the scene the solution is evaluated on (harmonic 0
    /// for the conventional RIS).
    pub fn new(scene: &Scene, state: &SolutionState, trace: &SolveTrace, scheme: BaselineKind, replicate: u64) -> Self {
        let c = |z: &num_complex::Complex64| [z.re, z.im];
        SolutionReport {
            scheme,
            seed: scene.config.seed,
            replicate,
            wsr: scene.weighted_sum_rate(state),
            rates: scene.user_rates(state),
            power_w: Scene::power(state),
            iterations: trace.iterations(),
            converged: trace.converged,
            freqs_hz: state.freqs.clone(),
            delays_s: state.delays.clone(),
            phases: state.phases.iter().map(c).collect(),
            beams: state.beams.iter().map(|w| w.iter().map(c).collect()).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = create(path)?;
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| Error::io(path, e.into()))?;
        f.flush().map_err(|e| Error::io(path, e))
    }
}

/// One row per sweep point x replicate x scheme.
pub fn write_records_csv<W: Write>(records: &[SolveRecord], users: usize, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["point", "axis_value", "label", "replicate", "scheme", "wsr"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=users).map(|k| format!("rate_{k}")));
    header.extend(["iterations", "converged", "error", "elapsed_s"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.point.to_string(),
            fmt(r.axis_value),
            r.label.clone(),
            r.replicate.to_string(),
            r.scheme.name().to_string(),
            r.wsr.map_or(String::new(), fmt),
        ];
        row.extend((0..users).map(|k| r.rates.get(k).map_or(String::new(), |x| fmt(*x))));
        row.push(r.iterations.to_string());
        row.push(r.converged.to_string());
        row.push(r.error.clone().unwrap_or_default());
        row.push(fmt(r.elapsed));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `iteration,wsr,surrogate,rate_1..rate_K,mu`; one row per outer
/// iteration (the starting point is not written).
pub fn write_trace_csv<W: Write>(trace: &SolveTrace, users: usize, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iteration".to_string(), "wsr".into(), "surrogate".into()];
    header.extend((1..=users).map(|k| format!("rate_{k}")));
    header.push("mu".into());
    w.write_record(&header)?;
    for e in trace.entries.iter().skip(1) {
        let mut row = vec![e.iteration.to_string(), fmt(e.wsr), fmt(e.surrogate)];
        row.extend((0..users).map(|k| e.rates.get(k).map_or(String::new(), |x| fmt(*x))));
        row.push(fmt(e.mu));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace_csv(trace: &SolveTrace, users: usize, path: &Path) -> Result<()> {
    write_trace_csv(trace, users, create(path)?).map_err(|e| csv_err(path, e))
}

pub fn save_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, summary).map_err(|e| Error::io(path, e.into()))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Files written by [`export_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExportedFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub traces: Vec<PathBuf>,
}

/// Writes `results.csv`, `summary.json` and `traces/<scheme>_p<point>.csv`
/// under `dir`.
pub fn export_run(run: &SweepRun, dir: &Path) -> Result<ExportedFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let users = run
        .summary
        .scenario
        .system
        .users
        .as_ref()
        .map_or(0, |u| u.len());
    let results = dir.join("results.csv");
    write_records_csv(&run.records, users, create(&results)?).map_err(|e| csv_err(&results, e))?;
    let summary = dir.join("summary.json");
    save_summary(&run.summary, &summary)?;
    let mut traces = Vec::new();
    if !run.traces.is_empty() {
        let tdir = dir.join("traces");
        std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        for t in &run.traces {
            let path = tdir.join(format!("{}_p{}.csv", t.scheme.name(), t.point));
            save_trace_csv(&t.trace, users, &path)?;
            traces.push(path);
        }
    }
    Ok(ExportedFiles {
        results,
        summary,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve::TraceEntry;

    fn entry(i: usize) -> TraceEntry {
        TraceEntry {
            iteration: i,
            wsr: 1.0 + i as f64,
            surrogate: 0.5 + i as f64,
            rates: vec![0.25, 0.5],
            mu: 0.0,
            bisections: 0,
            rcg_iterations: 0,
            gcmma_outer: 0,
            gcmma_inner: 0,
            joint_steps: 0,
            extrapolation: 0.0,
            elapsed: 0.0,
        }
    }

    #[test]
    fn empty_run_gives_header_only() {
        let mut buf = Vec::new();
        write_records_csv(&[], 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("point,axis_value,label,replicate,scheme,wsr,rate_1,rate_2,"));
    }

    #[test]
    fn trace_rows_match_iterations() {
        let trace = SolveTrace {
            entries: (0..=5).map(entry).collect(),
            converged: true,
            warm_started: false,
        };
        let mut buf = Vec::new();
        write_trace_csv(&trace, 2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,wsr,surrogate,rate_1,rate_2,mu");
        assert_eq!(lines.len() - 1, trace.iterations());
        assert!(lines[1].starts_with("1,2,1.5,"));
    }
}
