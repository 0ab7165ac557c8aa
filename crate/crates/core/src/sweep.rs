//! Monte-Carlo experiment driver: every scheme at a sweep point runs on the
//! same channel draw, replicates run concurrently, and results are sorted
//! by key so the output does not depend on scheduling.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::rate::{Scene, SolutionState};
use crate::scenario::{Scenario, ScenarioFile};
use crate::solve::{solve, solve_conventional_ris, solve_with_ris, solve_zf, BaselineKind, SolveOptions, SolveTrace};

/// One solve of one scheme on one channel draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub point: usize,
    pub axis_value: f64,
    pub label: String,
    pub replicate: u64,
    pub scheme: BaselineKind,
    /// `None` when the solver failed.
    pub wsr: Option<f64>,
    pub rates: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
    /// Wall time, seconds.
    pub elapsed: f64,
}

/// Replicate statistics of one scheme at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub axis_value: f64,
    pub label: String,
    pub scheme: BaselineKind,
    pub replicates: usize,
    pub failures: usize,
    /// `None` when every replicate failed.
    pub mean_wsr: Option<f64>,
    /// Standard error of the mean (0 with fewer than two replicates).
    pub stderr_wsr: Option<f64>,
    pub mean_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub point: usize,
    pub scheme: BaselineKind,
    pub trace: SolveTrace,
}

/// Aggregate description written as the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub seed: u64,
    pub axis: Option<String>,
    pub scenario: ScenarioFile,
    pub points: Vec<PointSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub summary: RunSummary,
    pub records: Vec<SolveRecord>,
    /// Traces of replicate 0 at every point.
    pub traces: Vec<TraceRecord>,
}

/// Sweep point configurations (a single point without a sweep).
pub fn sweep_points(scenario: &Scenario) -> Result<Vec<(f64, String, SystemConfig)>> {
    match &scenario.sweep {
        None => Ok(vec![(0.0, String::new(), scenario.system.clone())]),
        Some(s) => (0..s.len())
            .map(|i| Ok((s.value(i), s.label(i), s.apply(&scenario.system, i)?)))
            .collect(),
    }
}

/// All requested schemes on one scene. The conventional-RIS solution doubles
/// as the warm start of the proposed scheme when both are requested.
pub fn solve_schemes(
    scene: &Scene,
    schemes: &[BaselineKind],
    opts: &SolveOptions,
) -> Vec<(BaselineKind, Result<(SolutionState, SolveTrace)>, f64)> {
    let mut out = Vec::new();
    let mut ris: Option<SolutionState> = None;
    let wants_ris = schemes.contains(&BaselineKind::ConventionalRis);
    let mut order: Vec<BaselineKind> = schemes.to_vec();
    // conventional RIS first so the proposed scheme can reuse it
    order.sort_by_key(|k| *k != BaselineKind::ConventionalRis);
    for kind in order {
        let t = Instant::now();
        let result = match kind {
            BaselineKind::ConventionalRis => {
                let r = solve_conventional_ris(scene, opts);
                if let Ok((s, _)) = &r {
                    ris = Some(s.clone());
                }
                r
            }
            BaselineKind::ProposedFdris => match (&ris, wants_ris && scene.config.harmonic != 0 && opts.ris_warm_start) {
                (Some(r), true) => solve_with_ris(scene, r, opts),
                _ => solve(scene, opts),
            },
            BaselineKind::ZeroForcing => solve_zf(scene, opts),
        };
        out.push((kind, result, t.elapsed().as_secs_f64()));
    }
    out.sort_by_key(|(k, _, _)| schemes.iter().position(|s| s == k));
    out
}

/// Scene that `kind`'s solution has to be evaluated on.
pub fn evaluation_scene(scene: &Scene, kind: BaselineKind) -> Scene {
    match kind {
        BaselineKind::ConventionalRis => scene.with_harmonic(0),
        _ => scene.clone(),
    }
}

pub fn mean_stderr(x: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n == 0 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Some((mean, 0.0));
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, (var / n as f64).sqrt()))
}

/// Per-point, per-scheme statistics over the successful replicates.
pub fn summarize(records: &[SolveRecord]) -> Vec<PointSummary> {
    let mut keys: Vec<(usize, BaselineKind)> = records.iter().map(|r| (r.point, r.scheme)).collect();
    keys.sort_by_key(|&(p, k)| (p, k as u8));
    keys.dedup();
    keys.into_iter()
        .map(|(point, scheme)| {
            let rs: Vec<&SolveRecord> = records.iter().filter(|r| r.point == point && r.scheme == scheme).collect();
            let ok: Vec<&&SolveRecord> = rs.iter().filter(|r| r.wsr.is_some()).collect();
            let wsr: Vec<f64> = ok.iter().filter_map(|r| r.wsr).collect();
            let stats = mean_stderr(&wsr);
            let users = ok.first().map_or(0, |r| r.rates.len());
            let mean_rates = (0..users)
                .map(|k| ok.iter().map(|r| r.rates[k]).sum::<f64>() / ok.len() as f64)
                .collect();
            PointSummary {
                point,
                axis_value: rs[0].axis_value,
                label: rs[0].label.clone(),
                scheme,
                replicates: rs.len(),
                failures: rs.len() - ok.len(),
                mean_wsr: stats.map(|s| s.0),
                stderr_wsr: stats.map(|s| s.1),
                mean_rates,
            }
        })
        .collect()
}

/// Runs every sweep point and replicate for the requested schemes.
pub fn run_sweep(scenario: &Scenario) -> Result<SweepRun> {
    let points = sweep_points(scenario)?;
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (0..scenario.replicates as u64).map(move |r| (p, r)))
        .collect();
    info!("running {} point(s) x {} replicate(s)", points.len(), scenario.replicates);

    let work = || -> Vec<(Vec<SolveRecord>, Vec<TraceRecord>)> {
        jobs.par_iter()
            .map(|&(p, rep)| {
                let (value, label, config) = &points[p];
                run_job(p, *value, label, config, rep, scenario)
            })
            .collect()
    };
    let results = if scenario.workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(scenario.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?
            .install(work)
    };

    let mut records = Vec::new();
    let mut traces = Vec::new();
    for (r, t) in results {
        records.extend(r);
        traces.extend(t);
    }
    records.sort_by_key(|r| (r.point, r.replicate, r.scheme as u8));
    traces.sort_by_key(|t| (t.point, t.scheme as u8));
    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: scenario.system.seed,
        axis: scenario.sweep.as_ref().map(|s| s.axis().to_string()),
        scenario: ScenarioFile::from_scenario(scenario),
        points: summarize(&records),
    };
    Ok(SweepRun {
        summary,
        records,
        traces,
    })
}

fn run_job(
    point: usize,
    axis_value: f64,
    label: &str,
    config: &SystemConfig,
    replicate: u64,
    scenario: &Scenario,
) -> (Vec<SolveRecord>, Vec<TraceRecord>) {
    let record = |scheme, wsr, rates, iterations, converged, error, elapsed| SolveRecord {
        point,
        axis_value,
        label: label.to_string(),
        replicate,
        scheme,
        wsr,
        rates,
        iterations,
        converged,
        error,
        elapsed,
    };
    let scene = match Scene::realize(config.clone(), replicate) {
        Ok(s) => s,
        Err(e) => {
            warn!("point {point} replicate {replicate}: {e}");
            let recs = scenario
                .schemes
                .iter()
                .map(|&k| record(k, None, Vec::new(), 0, false, Some(e.to_string()), 0.0))
                .collect();
            return (recs, Vec::new());
        }
    };
    let mut recs = Vec::new();
    let mut traces = Vec::new();
    for (kind, result, elapsed) in solve_schemes(&scene, &scenario.schemes, &scenario.solver) {
        match result {
            Ok((state, trace)) => {
                let eval = evaluation_scene(&scene, kind);
                let rates = eval.user_rates(&state);
                let wsr = eval.weighted_sum_rate(&state);
                recs.push(record(kind, Some(wsr), rates, trace.iterations(), trace.converged, None, elapsed));
                if replicate == 0 {
                    traces.push(TraceRecord {
                        point,
                        scheme: kind,
                        trace,
                    });
                }
            }
            Err(e) => {
                warn!("point {point} replicate {replicate} {}: {e}", kind.name());
                recs.push(record(kind, None, Vec::new(), 0, false, Some(e.to_string()), elapsed));
            }
        }
    }
    (recs, traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(point: usize, scheme: BaselineKind, wsr: Option<f64>) -> SolveRecord {
        SolveRecord {
            point,
            axis_value: point as f64,
            label: point.to_string(),
            replicate: 0,
            scheme,
            wsr,
            rates: wsr.map_or(Vec::new(), |w| vec![w, 2.0 * w]),
            iterations: 1,
            converged: true,
            error: None,
            elapsed: 0.0,
        }
    }

    #[test]
    fn summary_statistics() {
        let r = vec![
            rec(0, BaselineKind::ProposedFdris, Some(1.0)),
            rec(0, BaselineKind::ProposedFdris, Some(3.0)),
            rec(0, BaselineKind::ProposedFdris, None),
            rec(1, BaselineKind::ConventionalRis, Some(2.0)),
        ];
        let s = summarize(&r);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].replicates, 3);
        assert_eq!(s[0].failures, 1);
        assert!((s[0].mean_wsr.unwrap() - 2.0).abs() < 1e-15);
        assert!((s[0].stderr_wsr.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(s[0].mean_rates, vec![2.0, 4.0]);
        assert_eq!(s[1].stderr_wsr, Some(0.0));
    }

    #[test]
    fn empty_summary() {
        assert!(summarize(&[]).is_empty());
    }
}
