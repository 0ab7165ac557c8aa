//! Path loss and Rician channel realizations for the BS -> surface and
//! surface -> user links.
//!
//! Randomness comes from ChaCha8 keyed by the scenario seed; Monte-Carlo
//! replicates select distinct ChaCha streams of the same key, so every
//! realization is reproducible on any platform. NLoS entries are drawn
//! row-major for `H_BR` (element, antenna), then user by user for `h_rk`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{steering_br, steering_ru, ArrayLayout};
use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Distance-power law `zeta(d) = sqrt(zeta_0 d^-alpha)` (amplitude).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    /// Power gain at 1 m, linear.
    pub reference_gain: f64,
    pub exponent_br: f64,
    pub exponent_ru: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    BsRis,
    RisUser,
}

impl PathLossModel {
    /// Reference gain of -30 dB at 1 m with exponent 2.2 on both links.
    pub fn reference_30db() -> Self {
        PathLossModel {
            reference_gain: 1e-3,
            exponent_br: 2.2,
            exponent_ru: 2.2,
        }
    }

    /// Free-space reference gain `(lambda / 4 pi)^2` with exponent 2.2 on
    /// both links.
    pub fn free_space(wavelength: f64) -> Self {
        let g = wavelength / (4.0 * std::f64::consts::PI);
        PathLossModel {
            reference_gain: g * g,
            exponent_br: 2.2,
            exponent_ru: 2.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reference_gain > 0.0 && self.reference_gain.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "path-loss reference gain must be positive, got {}",
                self.reference_gain
            )));
        }
        if !(self.exponent_br >= 0.0 && self.exponent_ru >= 0.0) {
            return Err(Error::InvalidParameter("path-loss exponents must be >= 0".into()));
        }
        Ok(())
    }

    /// Amplitude factor at distance `d` metres.
    pub fn amplitude(&self, d: f64, link: Link) -> Result<f64> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "path-loss distance must be positive, got {d}"
            )));
        }
        let alpha = match link {
            Link::BsRis => self.exponent_br,
            Link::RisUser => self.exponent_ru,
        };
        Ok((self.reference_gain * d.powf(-alpha)).sqrt())
    }
}

/// One realization of all channels in the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS -> surface, `I x N_t`.
    pub h_br: DMatrix<Complex64>,
    /// Surface -> user `k`, length `I`.
    pub h_ru: Vec<DVector<Complex64>>,
    /// Rician factor, linear.
    pub rician: f64,
    pub seed: u64,
    pub replicate: u64,
    pub zeta_br: f64,
    pub zeta_ru: Vec<f64>,
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// LoS/NLoS mixing weights `(sqrt(beta/(1+beta)), sqrt(1/(1+beta)))`.
fn rician_weights(beta: f64) -> (f64, f64) {
    if beta.is_infinite() {
        (1.0, 0.0)
    } else {
        ((beta / (1.0 + beta)).sqrt(), (1.0 / (1.0 + beta)).sqrt())
    }
}

/// Draws replicate 0 of the channel for `config` under `seed`.
pub fn realize_channels(config: &SystemConfig, layout: &ArrayLayout, seed: u64) -> Result<ChannelSet> {
    realize_replicate(config, layout, seed, 0)
}

/// Draws Monte-Carlo replicate `replicate` for `(config, seed)`.
pub fn realize_replicate(
    config: &SystemConfig,
    layout: &ArrayLayout,
    seed: u64,
    replicate: u64,
) -> Result<ChannelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);

    let (w_los, w_nlos) = rician_weights(config.rician);
    let zeta_br = config.path_loss.amplitude(config.bs.distance, Link::BsRis)?;
    let (a_r, a_b) = steering_br(layout, &config.bs, config.antennas);
    let elements = layout.elements();

    let mut nlos = DMatrix::<Complex64>::zeros(elements, config.antennas);
    for i in 0..elements {
        for n in 0..config.antennas {
            nlos[(i, n)] = complex_gaussian(&mut rng);
        }
    }
    let los = &a_r * a_b.transpose();
    let h_br = (los * Complex64::from(w_los) + nlos * Complex64::from(w_nlos)) * Complex64::from(zeta_br);

    let mut h_ru = Vec::with_capacity(config.users.len());
    let mut zeta_ru = Vec::with_capacity(config.users.len());
    for user in &config.users {
        let zeta = config.path_loss.amplitude(user.position.distance, Link::RisUser)?;
        let los = steering_ru(layout, &user.position);
        let nlos = DVector::from_fn(elements, |_, _| complex_gaussian(&mut rng));
        h_ru.push((los * Complex64::from(w_los) + nlos * Complex64::from(w_nlos)) * Complex64::from(zeta));
        zeta_ru.push(zeta);
    }

    Ok(ChannelSet {
        h_br,
        h_ru,
        rician: config.rician,
        seed,
        replicate,
        zeta_br,
        zeta_ru,
    })
}

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    format: String,
    elements: usize,
    antennas: usize,
    rician: f64,
    seed: u64,
    replicate: u64,
    zeta_br: f64,
    zeta_ru: Vec<f64>,
    /// Row-major `I x N_t`, each entry `[re, im]`.
    h_br: Vec<Vec<[f64; 2]>>,
    h_ru: Vec<Vec<[f64; 2]>>,
}

const CHANNEL_FORMAT: &str = "fdris-channels-v1";

fn pair(c: &Complex64) -> [f64; 2] {
    [c.re, c.im]
}

impl ChannelSet {
    pub fn elements(&self) -> usize {
        self.h_br.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.h_br.ncols()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ChannelFile {
            format: CHANNEL_FORMAT.into(),
            elements: self.elements(),
            antennas: self.antennas(),
            rician: self.rician,
            seed: self.seed,
            replicate: self.replicate,
            zeta_br: self.zeta_br,
            zeta_ru: self.zeta_ru.clone(),
            h_br: self
                .h_br
                .row_iter()
                .map(|row| row.iter().map(pair).collect())
                .collect(),
            h_ru: self.h_ru.iter().map(|h| h.iter().map(pair).collect()).collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Parse {
            path: "<channels>".into(),
            message: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: "<channels>".into(),
            message,
        };
        let file: ChannelFile = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        if file.format != CHANNEL_FORMAT {
            return Err(parse_err(format!("unknown channel format {:?}", file.format)));
        }
        if file.h_br.len() != file.elements || file.h_br.iter().any(|r| r.len() != file.antennas) {
            return Err(parse_err("h_br dimensions do not match header".into()));
        }
        if file.h_ru.iter().any(|h| h.len() != file.elements) || file.h_ru.len() != file.zeta_ru.len() {
            return Err(parse_err("h_ru dimensions do not match header".into()));
        }
        let h_br = DMatrix::from_fn(file.elements, file.antennas, |i, n| {
            let [re, im] = file.h_br[i][n];
            Complex64::new(re, im)
        });
        let h_ru = file
            .h_ru
            .iter()
            .map(|h| DVector::from_iterator(h.len(), h.iter().map(|&[re, im]| Complex64::new(re, im))))
            .collect();
        Ok(ChannelSet {
            h_br,
            h_ru,
            rician: file.rician,
            seed: file.seed,
            replicate: file.replicate,
            zeta_br: file.zeta_br,
            zeta_ru: file.zeta_ru,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_loss_examples() {
        let unit = PathLossModel {
            reference_gain: 1.0,
            exponent_br: 2.0,
            exponent_ru: 2.0,
        };
        assert!((unit.amplitude(1.0, Link::BsRis).unwrap() - 1.0).abs() < 1e-15);
        assert!((unit.amplitude(100.0, Link::RisUser).unwrap() - 0.01).abs() < 1e-15);
        assert!(unit.amplitude(0.0, Link::BsRis).is_err());
        assert!(unit.amplitude(-3.0, Link::BsRis).is_err());

        // dB-domain evaluation: 20 log10(lambda / 4 pi) - 10 alpha log10(d)
        let lambda = crate::array::SPEED_OF_LIGHT / 28e9;
        let model = PathLossModel {
            reference_gain: (lambda / (4.0 * std::f64::consts::PI)).powi(2),
            exponent_br: 2.2,
            exponent_ru: 2.2,
        };
        let db = 20.0 * (lambda / (4.0 * std::f64::consts::PI)).log10() - 22.0 * 40f64.log10();
        let via_db = 10f64.powf(db / 20.0);
        let direct = model.amplitude(40.0, Link::RisUser).unwrap();
        assert!(((direct - via_db) / via_db).abs() < 1e-12);
    }
}
