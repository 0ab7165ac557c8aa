//! Line-of-sight received-energy maps over distance and elevation.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{steering_br, PolarPosition, SPEED_OF_LIGHT};
use crate::channel::Link;
use crate::error::{Error, Result};
use crate::rate::{Scene, SolutionState};

/// dB value used for zero energy in exports.
pub const DB_FLOOR: f64 = -200.0;

pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// `|a_B^T w_k|^2` summed over the beams.
fn beam_gain(scene: &Scene, state: &SolutionState) -> f64 {
    let (_, a_b) = steering_br(&scene.layout, &scene.config.bs, scene.antennas());
    state.beams.iter().map(|w| a_b.dot(w).norm_sqr()).sum()
}

/// Array factor `sum_i a_R,i theta~_i exp(-j 2 pi g f_l d_i / c) exp(-j 2 pi Gamma_i / lambda)`
/// towards `pos`.
fn array_factor(scene: &Scene, state: &SolutionState, a_r: &[Complex64], pos: &PolarPosition) -> Complex64 {
    let g = f64::from(scene.config.harmonic);
    let lambda = scene.layout.shape.wavelength;
    scene
        .layout
        .path_offsets(pos.azimuth, pos.elevation)
        .into_iter()
        .enumerate()
        .map(|(i, gamma)| {
            let f = state.freqs[scene.layout.subarray(i)];
            let d = pos.distance + gamma;
            let phase = -2.0 * PI * g * f * d / SPEED_OF_LIGHT - 2.0 * PI * gamma / lambda;
            a_r[i] * state.phases[i] * Complex64::from_polar(1.0, phase)
        })
        .sum()
}

fn bs_steering(scene: &Scene) -> Vec<Complex64> {
    let (a_r, _) = steering_br(&scene.layout, &scene.config.bs, scene.antennas());
    a_r.iter().copied().collect()
}

/// Path-loss factor `A_0^2 zeta^2(d) zeta^2(d_br)` at distance `d`.
pub fn path_gain(scene: &Scene, distance: f64) -> Result<f64> {
    let pl = &scene.config.path_loss;
    let a = scene.config.amplitude
        * pl.amplitude(distance, Link::RisUser)?
        * pl.amplitude(scene.config.bs.distance, Link::BsRis)?;
    Ok(a * a)
}

/// Noise-free LoS energy received at `pos`, summed over all beams.
pub fn received_energy(scene: &Scene, state: &SolutionState, pos: &PolarPosition) -> Result<f64> {
    let af = array_factor(scene, state, &bs_steering(scene), pos);
    Ok(path_gain(scene, pos.distance)? * beam_gain(scene, state) * af.norm_sqr())
}

/// Grid axes; angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub distances: Vec<f64>,
    pub elevations: Vec<f64>,
    pub azimuth: f64,
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl PatternSpec {
    /// `nd` distances on `[d_lo, d_hi]` and `na` elevations on `[a_lo, a_hi]`
    /// (degrees) at azimuth `azimuth_deg`.
    pub fn uniform(d_lo: f64, d_hi: f64, nd: usize, a_lo: f64, a_hi: f64, na: usize, azimuth_deg: f64) -> Self {
        PatternSpec {
            distances: linspace(d_lo, d_hi, nd),
            elevations: linspace(a_lo.to_radians(), a_hi.to_radians(), na),
            azimuth: azimuth_deg.to_radians(),
        }
    }

    /// The 200 x 180 grid over 20-100 m and 0-180 deg at azimuth 90 deg.
    pub fn figure_default() -> Self {
        Self::uniform(20.0, 100.0, 200, 0.0, 180.0, 180, 90.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.distances.is_empty() || self.elevations.is_empty() {
            return Err(Error::Validation("pattern grid must not be empty".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.distances) || !increasing(&self.elevations) {
            return Err(Error::Validation("pattern axes must be strictly increasing".into()));
        }
        if self.distances[0] <= 0.0 {
            return Err(Error::Validation("pattern distances must be positive".into()));
        }
        Ok(())
    }
}

/// Energies indexed `[distance][elevation]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternGrid {
    pub spec: PatternSpec,
    pub energy: Vec<Vec<f64>>,
    /// Energy divided by the path-loss factor `A_0^2 zeta^2(d) zeta^2(d_br)`.
    pub normalized: Vec<Vec<f64>>,
}

pub fn compute_pattern(scene: &Scene, state: &SolutionState, spec: &PatternSpec) -> Result<PatternGrid> {
    spec.validate()?;
    let a_r = bs_steering(scene);
    let gain = beam_gain(scene, state);
    let rows: Result<Vec<(Vec<f64>, Vec<f64>)>> = spec
        .distances
        .par_iter()
        .map(|&d| {
            let pl = path_gain(scene, d)?;
            let norm: Vec<f64> = spec
                .elevations
                .iter()
                .map(|&el| {
                    let pos = PolarPosition {
                        distance: d,
                        azimuth: spec.azimuth,
                        elevation: el,
                    };
                    gain * array_factor(scene, state, &a_r, &pos).norm_sqr()
                })
                .collect();
            Ok((norm.iter().map(|x| x * pl).collect(), norm))
        })
        .collect();
    let (energy, normalized) = rows?.into_iter().unzip();
    Ok(PatternGrid {
        spec: spec.clone(),
        energy,
        normalized,
    })
}

impl PatternGrid {
    /// Cells not exceeded by any of their (up to 8) neighbours in the
    /// normalized map, excluding flat plateaus.
    pub fn local_maxima(&self) -> Vec<(usize, usize)> {
        let (nd, na) = (self.spec.distances.len(), self.spec.elevations.len());
        let v = &self.normalized;
        let mut out = Vec::new();
        for i in 0..nd {
            for j in 0..na {
                let mut is_max = true;
                let mut strict = false;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a < 0 || b < 0 || a >= nd as i64 || b >= na as i64 {
                            continue;
                        }
                        let n = v[a as usize][b as usize];
                        if n > v[i][j] {
                            is_max = false;
                        } else if n < v[i][j] {
                            strict = true;
                        }
                    }
                }
                if is_max && strict {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Grid cell closest to `(distance, elevation)`.
    pub fn nearest_cell(&self, distance: f64, elevation: f64) -> (usize, usize) {
        let nearest = |axis: &[f64], x: f64| {
            axis.iter()
                .enumerate()
                .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                .map_or(0, |(i, _)| i)
        };
        (nearest(&self.spec.distances, distance), nearest(&self.spec.elevations, elevation))
    }

    /// Whether a local maximum lies within `cells` grid steps of the point.
    pub fn has_peak_near(&self, distance: f64, elevation: f64, cells: usize) -> bool {
        let (i, j) = self.nearest_cell(distance, elevation);
        self.local_maxima()
            .iter()
            .any(|&(a, b)| a.abs_diff(i) <= cells && b.abs_diff(j) <= cells)
    }

    /// Largest spread of the normalized energy along distance, over angles.
    pub fn distance_spread(&self) -> f64 {
        (0..self.spec.elevations.len())
            .map(|j| {
                let col = self.normalized.iter().map(|r| r[j]);
                let max = col.clone().fold(f64::NEG_INFINITY, f64::max);
                let min = col.fold(f64::INFINITY, f64::min);
                max - min
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let s = &self.spec;
        writeln!(
            w,
            "# azimuth_deg={} distance_m={}..{} ({} points) elevation_deg={}..{} ({} points)",
            s.azimuth.to_degrees(),
            s.distances.first().copied().unwrap_or(0.0),
            s.distances.last().copied().unwrap_or(0.0),
            s.distances.len(),
            s.elevations.first().map_or(0.0, |x| x.to_degrees()),
            s.elevations.last().map_or(0.0, |x| x.to_degrees()),
            s.elevations.len()
        )?;
        writeln!(w, "distance,angle,energy_linear,energy_db,normalized_db")?;
        for (i, d) in s.distances.iter().enumerate() {
            for (j, a) in s.elevations.iter().enumerate() {
                let e = self.energy[i][j];
                writeln!(
                    w,
                    "{},{},{:e},{},{}",
                    d,
                    a.to_degrees(),
                    e,
                    to_db(e),
                    to_db(self.normalized[i][j])
                )?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
