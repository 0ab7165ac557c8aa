//! `fdris`: solve, sweep and inspect FD-RIS scenarios from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use fdris_core::export::{export_run, save_trace_csv, SolutionReport};
use fdris_core::pattern::{compute_pattern, PatternSpec};
use fdris_core::scenario::{load_scenario, Scenario, PAPER_PRESET};
use fdris_core::solve::{solve_kind, BaselineKind};
use fdris_core::sweep::{evaluation_scene, run_sweep, solve_schemes};
use fdris_core::{Error, Scene};

#[derive(Parser)]
#[command(name = "fdris", version, about = "Frequency-diverse RIS simulator and sum-rate optimizer")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one scheme on one channel realization.
    Solve(SolveArgs),
    /// Solve, then map received energy over a distance x elevation grid.
    Pattern(PatternArgs),
    /// Monte-Carlo sweep described by the scenario's experiment block.
    Sweep(Common),
    /// All schemes on the same channel realization.
    Baselines(Common),
    /// Check a scenario and print it with all defaults filled in.
    Validate(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Named parameter set used when no scenario file is given.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Schemes to run (repeatable); defaults to the scenario's list.
    #[arg(long, value_enum)]
    scheme: Vec<Scheme>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads, 0 = all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Channel realization used by single-solve commands.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PatternArgs {
    #[command(flatten)]
    common: Common,
    /// Distance range and point count, `lo,hi,n` in metres.
    #[arg(long, default_value = "20,100,200")]
    distances: String,
    /// Elevation range and point count, `lo,hi,n` in degrees.
    #[arg(long, default_value = "0,180,180")]
    elevations: String,
    #[arg(long, default_value_t = 90.0)]
    azimuth: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Fdris,
    Ris,
    Zf,
}

impl From<Scheme> for BaselineKind {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Fdris => BaselineKind::ProposedFdris,
            Scheme::Ris => BaselineKind::ConventionalRis,
            Scheme::Zf => BaselineKind::ZeroForcing,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        e if e.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn scenario(c: &Common) -> Result<Scenario, Error> {
    let mut s = match (&c.scenario, &c.preset) {
        (Some(path), _) => load_scenario(path)?,
        (None, p) => Scenario::preset(p.as_deref().unwrap_or(PAPER_PRESET))?,
    };
    if let Some(seed) = c.seed {
        s.system.seed = seed;
    }
    if !c.scheme.is_empty() {
        s.schemes = c.scheme.iter().map(|&k| k.into()).collect();
        s.schemes.dedup();
    }
    if let Some(r) = c.replicates {
        if r == 0 {
            return Err(Error::Validation("--replicates must be >= 1".into()));
        }
        s.replicates = r;
    }
    if let Some(w) = c.workers {
        s.workers = w;
    }
    Ok(s)
}

fn out_dir(c: &Common, s: &Scenario) -> Option<PathBuf> {
    c.out.clone().or_else(|| s.output_dir.clone())
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Validate(c) => {
            let s = scenario(&c)?;
            println!("{}", s.to_json());
            Ok(())
        }
        Command::Solve(a) => {
            let s = scenario(&a.common)?;
            let kind = single_scheme(&a.common);
            let scene = Scene::realize(s.system.clone(), a.common.replicate)?;
            let (state, trace) = solve_kind(&scene, kind, &s.solver)?;
            let eval = evaluation_scene(&scene, kind);
            let report = SolutionReport::new(&eval, &state, &trace, kind, a.common.replicate);
            print_report(&report);
            if let Some(dir) = out_dir(&a.common, &s) {
                create_dir(&dir)?;
                report.save(&dir.join("solution.json"))?;
                save_trace_csv(&trace, scene.users(), &dir.join(format!("trace_{}.csv", kind.name())))?;
                info!("wrote {}", dir.display());
            }
            Ok(())
        }
        Command::Pattern(a) => {
            let s = scenario(&a.common)?;
            let (d_lo, d_hi, nd) = parse_range(&a.distances, "--distances")?;
            let (e_lo, e_hi, ne) = parse_range(&a.elevations, "--elevations")?;
            let spec = PatternSpec::uniform(d_lo, d_hi, nd, e_lo, e_hi, ne, a.azimuth);
            spec.validate()?;
            let kind = single_scheme(&a.common);
            let scene = Scene::realize(s.system.clone(), a.common.replicate)?;
            let (state, _) = solve_kind(&scene, kind, &s.solver)?;
            let eval = evaluation_scene(&scene, kind);
            let grid = compute_pattern(&eval, &state, &spec)?;
            let dir = out_dir(&a.common, &s).unwrap_or_else(|| PathBuf::from("out"));
            create_dir(&dir)?;
            let path = dir.join(format!("pattern_{}.csv", kind.name()));
            grid.save_csv(&path)?;
            let mut peaks: Vec<(f64, f64, f64)> = grid
                .local_maxima()
                .into_iter()
                .map(|(i, j)| (grid.normalized[i][j], spec.distances[i], spec.elevations[j].to_degrees()))
                .collect();
            peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
            println!("wsr {:.6} bits/s/Hz; strongest local maxima (normalized):", eval.weighted_sum_rate(&state));
            for (v, d, el) in peaks.iter().take(8) {
                println!("  d = {d:7.2} m  elevation = {el:6.1} deg  {v:.4e}");
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Baselines(c) => {
            let mut s = scenario(&c)?;
            if c.scheme.is_empty() {
                s.schemes = BaselineKind::ALL.to_vec();
            }
            let scene = Scene::realize(s.system.clone(), c.replicate)?;
            let dir = out_dir(&c, &s);
            if let Some(d) = &dir {
                create_dir(d)?;
            }
            let mut failed = None;
            println!("{:<6} {:>12} {:>6}  rates", "scheme", "wsr", "iters");
            for (kind, result, _) in solve_schemes(&scene, &s.schemes, &s.solver) {
                match result {
                    Ok((state, trace)) => {
                        let eval = evaluation_scene(&scene, kind);
                        let report = SolutionReport::new(&eval, &state, &trace, kind, c.replicate);
                        let rates: Vec<String> = report.rates.iter().map(|r| format!("{r:.4}")).collect();
                        println!("{:<6} {:>12.6} {:>6}  {}", kind.name(), report.wsr, report.iterations, rates.join(" "));
                        if let Some(d) = &dir {
                            report.save(&d.join(format!("solution_{}.json", kind.name())))?;
                            save_trace_csv(&trace, scene.users(), &d.join(format!("trace_{}.csv", kind.name())))?;
                        }
                    }
                    Err(e) => {
                        println!("{:<6} failed: {e}", kind.name());
                        failed.get_or_insert(e);
                    }
                }
            }
            failed.map_or(Ok(()), Err)
        }
        Command::Sweep(c) => {
            let s = scenario(&c)?;
            let dir = out_dir(&c, &s).unwrap_or_else(|| PathBuf::from("out"));
            let run = run_sweep(&s)?;
            let files = export_run(&run, &dir)?;
            for p in &run.summary.points {
                let mean = p.mean_wsr.map_or("-".to_string(), |m| format!("{m:.4}"));
                let se = p.stderr_wsr.map_or("-".to_string(), |m| format!("{m:.4}"));
                println!(
                    "{:>3} {:<14} {:<6} wsr {mean} +/- {se} ({} failed of {})",
                    p.point,
                    p.label,
                    p.scheme.name(),
                    p.failures,
                    p.replicates
                );
            }
            println!("wrote {} and {}", files.results.display(), files.summary.display());
            Ok(())
        }
    }
}

fn single_scheme(c: &Common) -> BaselineKind {
    c.scheme.first().map_or(BaselineKind::ProposedFdris, |&k| k.into())
}

fn print_report(r: &SolutionReport) {
    println!("scheme      {}", r.scheme.name());
    println!("wsr         {:.6} bits/s/Hz", r.wsr);
    for (k, rate) in r.rates.iter().enumerate() {
        println!("rate_{}      {rate:.6}", k + 1);
    }
    println!("power       {:.6e} W", r.power_w);
    println!("iterations  {} (converged: {})", r.iterations, r.converged);
}

fn parse_range(s: &str, flag: &str) -> Result<(f64, f64, usize), Error> {
    let bad = || Error::Validation(format!("{flag} expects lo,hi,n; got {s:?}"));
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].parse().map_err(|_| bad())?;
    let hi = parts[1].parse().map_err(|_| bad())?;
    let n = parts[2].parse().map_err(|_| bad())?;
    Ok((lo, hi, n))
}
