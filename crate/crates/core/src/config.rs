//! SI-unit description of one simulated network.

use std::f64::consts::PI;

use crate::array::{ArrayShape, PolarPosition, SPEED_OF_LIGHT};
use crate::channel::PathLossModel;
use crate::error::{Error, Result};

/// One single-antenna user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct User {
    pub position: PolarPosition,
    /// Weight in the weighted sum rate.
    pub weight: f64,
    /// Receiver noise power, W.
    pub noise: f64,
}

/// Everything needed to build channels and run the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub shape: ArrayShape,
    /// Carrier frequency, Hz.
    pub carrier: f64,
    /// BS antenna count `N_t`.
    pub antennas: usize,
    /// Position of the surface's reference element seen from the BS.
    pub bs: PolarPosition,
    pub users: Vec<User>,
    /// Harmonic order `g`.
    pub harmonic: i32,
    /// Reflection amplitude `A_0`.
    pub amplitude: f64,
    /// Initial phase `phi_0`, radians.
    pub phase: f64,
    /// Modulation frequency bounds, Hz.
    pub f_min: f64,
    pub f_max: f64,
    /// Rician factor, linear.
    pub rician: f64,
    pub path_loss: PathLossModel,
    /// Total transmit power budget, W.
    pub power: f64,
    pub seed: u64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Factors `L` into `R x S` with `R` the largest divisor not above `sqrt(L)`.
pub fn grid_for_subarrays(l: usize) -> Result<(usize, usize)> {
    if l == 0 {
        return Err(Error::Validation("subarray count must be >= 1".into()));
    }
    let mut r = (l as f64).sqrt().floor() as usize;
    while r > 1 && l % r != 0 {
        r -= 1;
    }
    Ok((r.max(1), l / r.max(1)))
}

impl SystemConfig {
    /// Parameters of the 4-user, 28 GHz scenario used throughout the
    /// evaluation: FD-RIS at (100 m, 30 deg, 120 deg), 2x2-element
    /// subarrays, `g = 1`, 10 dB Rician factor, modulation band
    /// 0.2-20 MHz, users at 40/75/55/40 m with elevations 30/70/30/150 deg.
    ///
    /// `L = 16` (4x4 subarrays) and `N_t = 10` unless changed afterwards.
    pub fn paper_preset() -> Self {
        let carrier = 28e9;
        let wavelength = SPEED_OF_LIGHT / carrier;
        let shape = ArrayShape {
            r: 4,
            s: 4,
            m: 2,
            n: 2,
            spacing: wavelength / 2.0,
            wavelength,
        };
        let deg = PI / 180.0;
        let noise = dbm_to_watts(-110.0);
        let users = [(40.0, 30.0), (75.0, 70.0), (55.0, 30.0), (40.0, 150.0)]
            .into_iter()
            .map(|(d, el)| User {
                position: PolarPosition {
                    distance: d,
                    azimuth: 90.0 * deg,
                    elevation: el * deg,
                },
                weight: 0.25,
                noise,
            })
            .collect();
        SystemConfig {
            shape,
            carrier,
            antennas: 10,
            bs: PolarPosition {
                distance: 100.0,
                azimuth: 30.0 * deg,
                elevation: 120.0 * deg,
            },
            users,
            harmonic: 1,
            amplitude: 1.0,
            phase: 0.0,
            f_min: 0.2e6,
            f_max: 20e6,
            rician: db_to_linear(10.0),
            path_loss: PathLossModel::reference_30db(),
            power: dbm_to_watts(30.0),
            seed: 0,
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier
    }

    /// Replaces the subarray grid with an `R x S` factorization of `l`.
    pub fn with_subarrays(mut self, l: usize) -> Result<Self> {
        let (r, s) = grid_for_subarrays(l)?;
        self.shape.r = r;
        self.shape.s = s;
        Ok(self)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.weight).collect()
    }

    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.users.len() {
            return Err(Error::Validation(format!(
                "expected {} weights, got {}",
                self.users.len(),
                weights.len()
            )));
        }
        for (u, &w) in self.users.iter_mut().zip(weights) {
            u.weight = w;
        }
        Ok(())
    }

    /// Checks every invariant the solvers rely on.
    pub fn validate(&self) -> Result<()> {
        let v = |msg: String| Err(Error::Validation(msg));
        self.shape.validate().map_err(|e| Error::Validation(e.to_string()))?;
        if !(self.carrier > 0.0) {
            return v(format!("carrier frequency must be positive, got {}", self.carrier));
        }
        if ((self.shape.wavelength - self.wavelength()) / self.wavelength()).abs() > 1e-9 {
            return v("array wavelength does not match the carrier frequency".into());
        }
        if self.antennas == 0 {
            return v("antenna count must be >= 1".into());
        }
        self.bs
            .validate()
            .map_err(|e| Error::Validation(format!("bs position: {e}")))?;
        if self.users.is_empty() {
            return v("at least one user is required".into());
        }
        for (k, u) in self.users.iter().enumerate() {
            u.position
                .validate()
                .map_err(|e| Error::Validation(format!("user {}: {e}", k + 1)))?;
            if !(u.weight >= 0.0 && u.weight.is_finite()) {
                return v(format!("user {} weight must be non-negative", k + 1));
            }
            if !(u.noise > 0.0 && u.noise.is_finite()) {
                return v(format!("user {} noise power must be positive", k + 1));
            }
        }
        if !(self.amplitude > 0.0 && self.amplitude <= 1.0) {
            return v(format!("amplitude must lie in (0, 1], got {}", self.amplitude));
        }
        if !(self.f_min > 0.0) {
            return v(format!("f_min must be positive, got {}", self.f_min));
        }
        if self.f_min > self.f_max {
            return v(format!(
                "f_min ({}) must not exceed f_max ({})",
                self.f_min, self.f_max
            ));
        }
        if !(self.rician >= 0.0) {
            return v("rician factor must be non-negative".into());
        }
        self.path_loss
            .validate()
            .map_err(|e| Error::Validation(e.to_string()))?;
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return v(format!("power budget must be non-negative, got {}", self.power));
        }
        Ok(())
    }
}
