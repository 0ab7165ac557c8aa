//! Scenario files: a JSON description of one network plus an experiment
//! block. Angles are given in degrees and powers in dBm in the file; the
//! resolved [`Scenario`] is in SI units. Fields left out take the values
//! of the `paper-sec5` preset.

use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayShape, PolarPosition};
use crate::channel::PathLossModel;
use crate::config::{db_to_linear, dbm_to_watts, grid_for_subarrays, watts_to_dbm, SystemConfig, User};
use crate::error::{Error, Result};
use crate::solve::{BaselineKind, SolveOptions};

pub const PAPER_PRESET: &str = "paper-sec5";

/// Rounds to 12 significant digits so unit conversions echo cleanly
/// (`29.999999999999996` -> `30`).
fn tidy(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionSpec {
    pub distance_m: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl PositionSpec {
    fn to_polar(self) -> PolarPosition {
        PolarPosition {
            distance: self.distance_m,
            azimuth: self.azimuth_deg.to_radians(),
            elevation: self.elevation_deg.to_radians(),
        }
    }

    fn from_polar(p: &PolarPosition) -> Self {
        PositionSpec {
            distance_m: p.distance,
            azimuth_deg: tidy(p.azimuth.to_degrees()),
            elevation_deg: tidy(p.elevation.to_degrees()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub distance_m: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dbm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossSpec {
    /// Power gain at 1 m, dB.
    pub reference_gain_db: f64,
    pub exponent_br: f64,
    pub exponent_ru: f64,
}

/// Network parameters; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antennas: Option<usize>,
    /// Subarray count `L`, factored into a near-square `R x S` grid.
    /// Ignored when `subarray_grid` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subarrays: Option<usize>,
    /// `[R, S]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subarray_grid: Option<[usize; 2]>,
    /// `[M, N]` elements per subarray.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subarray_shape: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_wavelengths: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs: Option<PositionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<Vec<UserSpec>>,
    /// Per-user weights; overrides the weights in `users`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Noise power for users that do not set their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harmonic: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_min_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_max_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rician_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_loss: Option<PathLossSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<f64>,
}

/// Swept parameter and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    Subarrays(Vec<usize>),
    Antennas(Vec<usize>),
    PowerDbm(Vec<f64>),
    Weights(Vec<Vec<f64>>),
}

impl Sweep {
    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::Subarrays(_) => "subarrays",
            Sweep::Antennas(_) => "antennas",
            Sweep::PowerDbm(_) => "power_dbm",
            Sweep::Weights(_) => "weights",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::Subarrays(v) | Sweep::Antennas(v) => v.len(),
            Sweep::PowerDbm(v) => v.len(),
            Sweep::Weights(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Text form of value `i`, used in result files.
    pub fn label(&self, i: usize) -> String {
        match self {
            Sweep::Subarrays(v) | Sweep::Antennas(v) => v[i].to_string(),
            Sweep::PowerDbm(v) => v[i].to_string(),
            Sweep::Weights(v) => v[i]
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    /// Numeric value `i` (the index for the weights axis).
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Sweep::Subarrays(v) | Sweep::Antennas(v) => v[i] as f64,
            Sweep::PowerDbm(v) => v[i],
            Sweep::Weights(_) => i as f64,
        }
    }

    /// `base` with value `i` applied.
    pub fn apply(&self, base: &SystemConfig, i: usize) -> Result<SystemConfig> {
        let mut c = base.clone();
        match self {
            Sweep::Subarrays(v) => c = c.with_subarrays(v[i])?,
            Sweep::Antennas(v) => c.antennas = v[i],
            Sweep::PowerDbm(v) => c.power = dbm_to_watts(v[i]),
            Sweep::Weights(v) => c.set_weights(&v[i])?,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Scheme names: `fdris`, `ris`, `zf`.
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    /// Concurrent solves; 0 means one per available core.
    #[serde(default)]
    pub workers: usize,
}

fn one() -> usize {
    1
}

fn default_schemes() -> Vec<String> {
    vec!["fdris".into(), "ris".into()]
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            sweep: None,
            replicates: 1,
            output_dir: None,
            schemes: default_schemes(),
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub solver: SolverSpec,
}

/// Validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemConfig,
    pub sweep: Option<Sweep>,
    pub replicates: usize,
    pub output_dir: Option<PathBuf>,
    pub schemes: Vec<BaselineKind>,
    pub workers: usize,
    pub solver: SolveOptions,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}

impl SystemSpec {
    /// Every field filled in from `c`.
    pub fn from_config(c: &SystemConfig) -> Self {
        SystemSpec {
            carrier_hz: Some(c.carrier),
            antennas: Some(c.antennas),
            subarrays: None,
            subarray_grid: Some([c.shape.r, c.shape.s]),
            subarray_shape: Some([c.shape.m, c.shape.n]),
            spacing_wavelengths: Some(c.shape.spacing / c.shape.wavelength),
            bs: Some(PositionSpec::from_polar(&c.bs)),
            users: Some(
                c.users
                    .iter()
                    .map(|u| UserSpec {
                        distance_m: u.position.distance,
                        azimuth_deg: tidy(u.position.azimuth.to_degrees()),
                        elevation_deg: tidy(u.position.elevation.to_degrees()),
                        weight: Some(u.weight),
                        noise_dbm: Some(tidy(watts_to_dbm(u.noise))),
                    })
                    .collect(),
            ),
            weights: None,
            noise_dbm: None,
            harmonic: Some(c.harmonic),
            amplitude: Some(c.amplitude),
            phase_deg: Some(tidy(c.phase.to_degrees())),
            f_min_hz: Some(c.f_min),
            f_max_hz: Some(c.f_max),
            rician_db: Some(tidy(10.0 * c.rician.log10())),
            path_loss: Some(PathLossSpec {
                reference_gain_db: tidy(10.0 * c.path_loss.reference_gain.log10()),
                exponent_br: c.path_loss.exponent_br,
                exponent_ru: c.path_loss.exponent_ru,
            }),
            power_dbm: Some(tidy(watts_to_dbm(c.power))),
        }
    }

    /// Overlays the given fields on `base`.
    pub fn resolve(&self, base: &SystemConfig) -> Result<SystemConfig> {
        let mut c = base.clone();
        if let Some(f) = self.carrier_hz {
            check(f > 0.0 && f.is_finite(), || format!("carrier_hz must be positive, got {f}"))?;
            c.carrier = f;
        }
        let wavelength = c.wavelength();
        let spacing = self
            .spacing_wavelengths
            .map_or(base.shape.spacing / base.shape.wavelength, |s| s);
        check(spacing > 0.0 && spacing.is_finite(), || {
            format!("spacing_wavelengths must be positive, got {spacing}")
        })?;
        let (mut r, mut s) = (c.shape.r, c.shape.s);
        if let Some(l) = self.subarrays {
            (r, s) = grid_for_subarrays(l)?;
        }
        if let Some([gr, gs]) = self.subarray_grid {
            (r, s) = (gr, gs);
        }
        let [m, n] = self.subarray_shape.unwrap_or([c.shape.m, c.shape.n]);
        c.shape = ArrayShape::new(r, s, m, n, spacing * wavelength, wavelength)
            .map_err(|e| Error::Validation(e.to_string()))?;
        if let Some(a) = self.antennas {
            c.antennas = a;
        }
        if let Some(bs) = self.bs {
            c.bs = bs.to_polar();
        }
        let default_noise = self.noise_dbm.map(dbm_to_watts);
        if let Some(users) = &self.users {
            let base_user = base.users.first().copied();
            c.users = users
                .iter()
                .map(|u| User {
                    position: PositionSpec {
                        distance_m: u.distance_m,
                        azimuth_deg: u.azimuth_deg,
                        elevation_deg: u.elevation_deg,
                    }
                    .to_polar(),
                    weight: u.weight.unwrap_or(1.0 / users.len() as f64),
                    noise: u
                        .noise_dbm
                        .map(dbm_to_watts)
                        .or(default_noise)
                        .or(base_user.map(|b| b.noise))
                        .unwrap_or(dbm_to_watts(-110.0)),
                })
                .collect();
        } else if let Some(noise) = default_noise {
            c.users.iter_mut().for_each(|u| u.noise = noise);
        }
        if let Some(w) = &self.weights {
            c.set_weights(w)?;
        }
        if let Some(g) = self.harmonic {
            c.harmonic = g;
        }
        if let Some(a) = self.amplitude {
            c.amplitude = a;
        }
        if let Some(p) = self.phase_deg {
            c.phase = p.to_radians();
        }
        if let Some(f) = self.f_min_hz {
            c.f_min = f;
        }
        if let Some(f) = self.f_max_hz {
            c.f_max = f;
        }
        if let Some(b) = self.rician_db {
            c.rician = db_to_linear(b);
        }
        if let Some(pl) = self.path_loss {
            c.path_loss = PathLossModel {
                reference_gain: db_to_linear(pl.reference_gain_db),
                exponent_br: pl.exponent_br,
                exponent_ru: pl.exponent_ru,
            };
        }
        if let Some(p) = self.power_dbm {
            check(p.is_finite(), || format!("power_dbm must be finite, got {p}"))?;
            c.power = dbm_to_watts(p);
        }
        c.validate()?;
        Ok(c)
    }
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Fully specified file describing `scenario`.
    pub fn from_scenario(s: &Scenario) -> Self {
        ScenarioFile {
            preset: None,
            seed: Some(s.system.seed),
            system: SystemSpec::from_config(&s.system),
            experiment: ExperimentSpec {
                sweep: s.sweep.clone(),
                replicates: s.replicates,
                output_dir: s.output_dir.clone(),
                schemes: s.schemes.iter().map(|k| k.name().to_string()).collect(),
                workers: s.workers,
            },
            solver: SolverSpec {
                tolerance: Some(s.solver.tolerance),
                max_iterations: Some(s.solver.max_iterations),
            },
        }
    }

    pub fn resolve(&self) -> Result<Scenario> {
        let mut base = match self.preset.as_deref() {
            None | Some(PAPER_PRESET) => SystemConfig::paper_preset(),
            Some(other) => {
                return Err(Error::Validation(format!(
                    "unknown preset {other:?} (available: {PAPER_PRESET})"
                )))
            }
        };
        base.seed = match self.seed {
            Some(s) => s,
            None => {
                warn!("scenario has no seed; using 0");
                0
            }
        };
        let system = self.system.resolve(&base)?;
        let e = &self.experiment;
        check(e.replicates >= 1, || "experiment.replicates must be >= 1".into())?;
        let mut schemes = Vec::new();
        for name in &e.schemes {
            let kind = BaselineKind::parse(name)
                .ok_or_else(|| Error::Validation(format!("unknown scheme {name:?} (use fdris, ris or zf)")))?;
            if !schemes.contains(&kind) {
                schemes.push(kind);
            }
        }
        check(!schemes.is_empty(), || "experiment.schemes must not be empty".into())?;
        if let Some(sweep) = &e.sweep {
            check(!sweep.is_empty(), || format!("sweep over {} has no values", sweep.axis()))?;
            for i in 0..sweep.len() {
                sweep
                    .apply(&system, i)
                    .map_err(|err| Error::Validation(format!("sweep value {}: {err}", sweep.label(i))))?;
            }
        }
        let mut solver = SolveOptions::default();
        if let Some(t) = self.solver.tolerance {
            check(t > 0.0 && t.is_finite(), || format!("solver.tolerance must be positive, got {t}"))?;
            solver.tolerance = t;
        }
        if let Some(m) = self.solver.max_iterations {
            check(m >= 1, || "solver.max_iterations must be >= 1".into())?;
            solver.max_iterations = m;
        }
        Ok(Scenario {
            system,
            sweep: e.sweep.clone(),
            replicates: e.replicates,
            output_dir: e.output_dir.clone(),
            schemes,
            workers: e.workers,
            solver,
        })
    }
}

impl Scenario {
    /// Named preset; only `paper-sec5` exists.
    pub fn preset(name: &str) -> Result<Self> {
        ScenarioFile {
            preset: Some(name.to_string()),
            seed: Some(0),
            ..ScenarioFile::default()
        }
        .resolve()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from_scenario(self)).expect("scenario serializes")
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioFile::parse(&text, &path.display().to_string())?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_matches_paper_values() {
        let s = Scenario::preset(PAPER_PRESET).unwrap();
        let c = &s.system;
        assert_eq!(c.carrier, 28e9);
        assert_eq!(c.harmonic, 1);
        assert_eq!((c.shape.m, c.shape.n), (2, 2));
        assert_eq!(c.shape.subarrays(), 16);
        assert_eq!(c.antennas, 10);
        assert!((c.rician - 10.0).abs() < 1e-12);
        assert_eq!((c.f_min, c.f_max), (0.2e6, 20e6));
        assert!((c.bs.distance - 100.0).abs() < 1e-12);
        assert!((c.bs.azimuth.to_degrees() - 30.0).abs() < 1e-9);
        assert!((c.bs.elevation.to_degrees() - 120.0).abs() < 1e-9);
        let d: Vec<f64> = c.users.iter().map(|u| u.position.distance).collect();
        assert_eq!(d, vec![40.0, 75.0, 55.0, 40.0]);
        let el: Vec<f64> = c.users.iter().map(|u| u.position.elevation.to_degrees().round()).collect();
        assert_eq!(el, vec![30.0, 70.0, 30.0, 150.0]);
        assert!(c.users.iter().all(|u| (u.position.azimuth.to_degrees() - 90.0).abs() < 1e-9));
        assert!((c.power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_band_is_rejected() {
        let f = ScenarioFile::parse(r#"{"seed": 1, "system": {"f_min_hz": 3e7, "f_max_hz": 2e7}}"#, "t").unwrap();
        assert!(matches!(f.resolve(), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_seed_defaults_to_zero() {
        let s = ScenarioFile::parse("{}", "t").unwrap().resolve().unwrap();
        assert_eq!(s.system.seed, 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ScenarioFile::parse(r#"{"system": {"carrier": 1e9}}"#, "t").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("carrier") && msg.contains("line"), "{msg}");
        assert!(ScenarioFile::parse(r#"{"bogus": 1}"#, "t").is_err());
    }

    #[test]
    fn file_units_are_converted() {
        let f = ScenarioFile::parse(
            r#"{"seed": 7, "system": {"power_dbm": 20, "bs": {"distance_m": 50, "azimuth_deg": 45, "elevation_deg": 90},
                "users": [{"distance_m": 30, "azimuth_deg": 90, "elevation_deg": 60, "noise_dbm": -100}]}}"#,
            "t",
        )
        .unwrap();
        let s = f.resolve().unwrap();
        assert_eq!(s.system.seed, 7);
        assert!((s.system.power - 0.1).abs() < 1e-12);
        assert!((s.system.bs.azimuth - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert_eq!(s.system.users.len(), 1);
        assert!((s.system.users[0].noise - 1e-13).abs() < 1e-25);
        assert!((s.system.users[0].weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_values_are_checked() {
        let f = ScenarioFile::parse(r#"{"experiment": {"sweep": {"axis": "subarrays", "values": [4, 0]}}}"#, "t").unwrap();
        assert!(matches!(f.resolve(), Err(Error::Validation(_))));
        let f = ScenarioFile::parse(r#"{"experiment": {"sweep": {"axis": "weights", "values": [[1, 2]]}}}"#, "t").unwrap();
        assert!(f.resolve().is_err());
        let f = ScenarioFile::parse(r#"{"experiment": {"schemes": ["fdris", "magic"]}}"#, "t").unwrap();
        assert!(f.resolve().is_err());
    }

    #[test]
    fn resolved_file_round_trips() {
        let s = Scenario::preset(PAPER_PRESET).unwrap();
        let again = ScenarioFile::parse(&s.to_json(), "t").unwrap().resolve().unwrap();
        let c = &again.system;
        assert_eq!(c.shape, s.system.shape);
        assert!((c.power - s.system.power).abs() < 1e-12);
        for (a, b) in c.users.iter().zip(&s.system.users) {
            assert!((a.noise - b.noise).abs() < 1e-24);
            assert!((a.position.elevation - b.position.elevation).abs() < 1e-12);
        }
        assert!((c.path_loss.reference_gain - s.system.path_loss.reference_gain).abs() < 1e-15);
    }
}
