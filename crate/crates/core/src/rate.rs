//! Effective channels, rates and the MMSE surrogate shared by all solvers.
//!
//! For user `k` the cascaded row channel is
//! `g_k = h_rk^T diag(theta~) diag(theta^k) H_BR`, so `g_k w` is the
//! complex gain seen by a symbol precoded with `w`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::array::{self, ArrayLayout};
use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::error::{Error, Result};

/// Immutable problem data: configuration, index maps and one channel draw.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SystemConfig,
    pub layout: ArrayLayout,
    pub channels: ChannelSet,
    user_distances: Vec<Vec<f64>>,
}

impl Scene {
    pub fn new(config: SystemConfig, channels: ChannelSet) -> Result<Self> {
        config.validate()?;
        let layout = ArrayLayout::new(config.shape)?;
        if channels.elements() != layout.elements()
            || channels.antennas() != config.antennas
            || channels.h_ru.len() != config.users.len()
        {
            return Err(Error::InvalidParameter(format!(
                "channel dimensions ({}x{}, {} users) do not match the configuration ({}x{}, {} users)",
                channels.elements(),
                channels.antennas(),
                channels.h_ru.len(),
                layout.elements(),
                config.antennas,
                config.users.len()
            )));
        }
        let user_distances = config
            .users
            .iter()
            .map(|u| layout.element_distances(&u.position))
            .collect();
        Ok(Scene {
            config,
            layout,
            channels,
            user_distances,
        })
    }

    /// Builds the scene and draws replicate `replicate` of its channels.
    pub fn realize(config: SystemConfig, replicate: u64) -> Result<Self> {
        let layout = ArrayLayout::new(config.shape)?;
        let channels = crate::channel::realize_replicate(&config, &layout, config.seed, replicate)?;
        Scene::new(config, channels)
    }

    /// Same scene with the harmonic order used in `Theta_k` replaced.
    pub fn with_harmonic(&self, harmonic: i32) -> Self {
        let mut s = self.clone();
        s.config.harmonic = harmonic;
        s
    }

    pub fn users(&self) -> usize {
        self.config.users.len()
    }

    pub fn elements(&self) -> usize {
        self.layout.elements()
    }

    pub fn subarrays(&self) -> usize {
        self.layout.subarrays()
    }

    pub fn antennas(&self) -> usize {
        self.config.antennas
    }

    pub fn weights(&self) -> Vec<f64> {
        self.config.weights()
    }

    pub fn noises(&self) -> Vec<f64> {
        self.config.users.iter().map(|u| u.noise).collect()
    }

    /// `d^rk_{i_z,i_y}` for every element.
    pub fn user_distances(&self, k: usize) -> &[f64] {
        &self.user_distances[k]
    }

    /// Diagonal of `Theta_k` at frequencies `freqs`.
    pub fn theta_k(&self, k: usize, freqs: &[f64]) -> Vec<Complex64> {
        array::theta_k_from_distances(
            self.config.harmonic,
            self.config.amplitude,
            self.config.phase,
            freqs,
            &self.layout,
            &self.user_distances[k],
        )
    }

    /// `H_BR w` for each beam.
    pub fn illuminations(&self, beams: &[DVector<Complex64>]) -> Vec<DVector<Complex64>> {
        beams.iter().map(|w| &self.channels.h_br * w).collect()
    }

    pub fn effective_channels(&self, phases: &[Complex64], freqs: &[f64]) -> EffectiveChannels {
        let rows = (0..self.users())
            .map(|k| {
                let theta = self.theta_k(k, freqs);
                let h = &self.channels.h_ru[k];
                let c = DVector::from_fn(self.elements(), |i, _| h[i] * phases[i] * theta[i]);
                self.channels.h_br.tr_mul(&c)
            })
            .collect();
        EffectiveChannels { rows }
    }

    pub fn effective_for(&self, state: &SolutionState) -> EffectiveChannels {
        self.effective_channels(&state.phases, &state.freqs)
    }

    pub fn user_rates(&self, state: &SolutionState) -> Vec<f64> {
        self.effective_for(state).rates(&state.beams, &self.noises())
    }

    pub fn weighted_sum_rate(&self, state: &SolutionState) -> f64 {
        weighted_sum_rate(&self.user_rates(state), &self.weights())
    }

    pub fn update_aux(&self, state: &SolutionState) -> MmseAux {
        self.effective_for(state).update_aux(&state.beams, &self.noises())
    }

    pub fn surrogate_wsr(&self, state: &SolutionState, aux: &MmseAux) -> f64 {
        self.effective_for(state)
            .surrogate(&state.beams, aux, &self.weights(), &self.noises())
    }

    /// Total transmit power of `state`.
    pub fn power(state: &SolutionState) -> f64 {
        state.beams.iter().map(|w| w.norm_squared()).sum()
    }
}

/// Per-user cascaded channels; `rows[k]` holds the entries of `g_k`.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    pub rows: Vec<DVector<Complex64>>,
}

impl EffectiveChannels {
    /// `g_k w` (no conjugation).
    pub fn gain(&self, k: usize, w: &DVector<Complex64>) -> Complex64 {
        self.rows[k].dot(w)
    }

    /// Stacked `K x N_t` matrix `Z` whose rows are the `g_k`.
    pub fn stacked(&self) -> DMatrix<Complex64> {
        let n = self.rows.first().map_or(0, |r| r.len());
        DMatrix::from_fn(self.rows.len(), n, |k, j| self.rows[k][j])
    }

    /// `(|g_k w_k|^2, sum_{j != k} |g_k w_j|^2)`.
    fn signal_interference(&self, k: usize, beams: &[DVector<Complex64>]) -> (f64, f64) {
        let mut signal = 0.0;
        let mut interference = 0.0;
        for (j, w) in beams.iter().enumerate() {
            let p = self.gain(k, w).norm_sqr();
            if j == k {
                signal = p;
            } else {
                interference += p;
            }
        }
        (signal, interference)
    }

    /// Achievable rate of user `k` in bits/s/Hz.
    pub fn rate(&self, k: usize, beams: &[DVector<Complex64>], noise: f64) -> f64 {
        let (s, i) = self.signal_interference(k, beams);
        (s / (i + noise)).ln_1p() / LN_2
    }

    pub fn rates(&self, beams: &[DVector<Complex64>], noises: &[f64]) -> Vec<f64> {
        (0..self.rows.len())
            .map(|k| self.rate(k, beams, noises[k]))
            .collect()
    }

    /// Optimal receive filters and MMSE weights at the given beams.
    pub fn update_aux(&self, beams: &[DVector<Complex64>], noises: &[f64]) -> MmseAux {
        let users = self.rows.len();
        let mut aux = MmseAux {
            weight: Vec::with_capacity(users),
            filter: Vec::with_capacity(users),
            mse: Vec::with_capacity(users),
        };
        for k in 0..users {
            let (s, i) = self.signal_interference(k, beams);
            let floor = i + noises[k];
            let total = s + floor;
            let (u, e) = if s == 0.0 || !total.is_finite() {
                (Complex64::new(0.0, 0.0), 1.0)
            } else {
                // E_k at its minimizer is (interference + noise) / total;
                // written this way to avoid cancellation at high SINR.
                (self.gain(k, &beams[k]) / total, floor / total)
            };
            aux.filter.push(u);
            aux.mse.push(e);
            aux.weight.push(1.0 / e);
        }
        aux
    }

    /// `E_k(u_k, w)` for an arbitrary filter, as
    /// `|u|^2 (I_k + sigma^2) + |1 - u^* g_k w_k|^2`.
    pub fn mse(&self, k: usize, u: Complex64, beams: &[DVector<Complex64>], noise: f64) -> f64 {
        let (_, i) = self.signal_interference(k, beams);
        let s = self.gain(k, &beams[k]);
        u.norm_sqr() * (i + noise) + (Complex64::new(1.0, 0.0) - u.conj() * s).norm_sqr()
    }

    /// `sum_k w_k (ln W_k - W_k E_k + 1) / ln 2` with `aux` held fixed.
    pub fn surrogate(
        &self,
        beams: &[DVector<Complex64>],
        aux: &MmseAux,
        weights: &[f64],
        noises: &[f64],
    ) -> f64 {
        (0..self.rows.len())
            .map(|k| {
                let e = self.mse(k, aux.filter[k], beams, noises[k]);
                weights[k] * surrogate_rate(aux.weight[k], e)
            })
            .sum()
    }
}

/// `(ln W - W E + 1) / ln 2`.
pub fn surrogate_rate(weight: f64, mse: f64) -> f64 {
    (weight.ln() - weight * mse + 1.0) / LN_2
}

pub fn weighted_sum_rate(rates: &[f64], weights: &[f64]) -> f64 {
    rates.iter().zip(weights).map(|(r, w)| r * w).sum()
}

/// MMSE auxiliary variables, one entry per user.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseAux {
    /// `W_k > 0`.
    pub weight: Vec<f64>,
    /// Receive filter `u_k`.
    pub filter: Vec<Complex64>,
    /// `E_k` at the update point.
    pub mse: Vec<f64>,
}

/// Current iterate of the alternating optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    /// Beamformers `w_k`, length `N_t` each.
    pub beams: Vec<DVector<Complex64>>,
    /// Delay-induced phases `theta~_i` (unit modulus).
    pub phases: Vec<Complex64>,
    /// Modulation frequencies `f_l`, Hz.
    pub freqs: Vec<f64>,
    /// Time delays realizing `phases` at `freqs`; `None` when the harmonic
    /// order is zero and `phases` act as plain phase shifters.
    pub delays: Option<Vec<f64>>,
    pub aux: Option<MmseAux>,
    /// Weighted sum rate, bits/s/Hz.
    pub objective: f64,
}

impl SolutionState {
    /// Feasible starting point: matched-filter beams sharing the full power
    /// budget equally, zero delays and uniformly spaced frequencies.
    pub fn initial(scene: &Scene) -> Self {
        let cfg = &scene.config;
        let l = scene.subarrays();
        let freqs: Vec<f64> = if l == 1 {
            vec![0.5 * (cfg.f_min + cfg.f_max)]
        } else {
            (0..l)
                .map(|i| cfg.f_min + (cfg.f_max - cfg.f_min) * i as f64 / (l - 1) as f64)
                .collect()
        };
        let phases = vec![Complex64::new(1.0, 0.0); scene.elements()];
        let eff = scene.effective_channels(&phases, &freqs);
        let users = scene.users();
        let per_user = cfg.power / users as f64;
        let beams = eff
            .rows
            .iter()
            .map(|g| {
                let norm = g.norm();
                if norm > 0.0 {
                    g.map(|x| x.conj()) * Complex64::from(per_user.sqrt() / norm)
                } else {
                    DVector::zeros(scene.antennas())
                }
            })
            .collect();
        let mut state = SolutionState {
            beams,
            phases,
            freqs,
            delays: None,
            aux: None,
            objective: 0.0,
        };
        state.refresh_delays(scene);
        state.objective = scene.weighted_sum_rate(&state);
        state
    }

    /// Recomputes the time delays from the phases and frequencies.
    pub fn refresh_delays(&mut self, scene: &Scene) {
        self.delays = if scene.config.harmonic == 0 {
            None
        } else {
            array::delays_from_phases(scene.config.harmonic, &self.phases, &self.freqs, &scene.layout).ok()
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn random_channels(rng: &mut ChaCha8Rng, k: usize, nt: usize) -> EffectiveChannels {
        EffectiveChannels {
            rows: (0..k).map(|_| random_cvec(rng, nt)).collect(),
        }
    }

    #[test]
    fn rate_examples() {
        let eff = EffectiveChannels {
            rows: vec![DVector::from_vec(vec![Complex64::new(2.0, 0.0)])],
        };
        let w = vec![DVector::from_vec(vec![Complex64::new(0.5, 0.0)])];
        assert!((eff.rate(0, &w, 1.0) - 1.0).abs() < 1e-15);
        let zero = vec![DVector::from_vec(vec![Complex64::new(0.0, 0.0)])];
        assert_eq!(eff.rate(0, &zero, 1.0), 0.0);
    }

    #[test]
    fn weighted_sum_examples() {
        assert_eq!(weighted_sum_rate(&[1.0, 2.0], &[0.0, 0.0]), 0.0);
        assert!((weighted_sum_rate(&[3.0; 4], &[0.25; 4]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn aux_for_zero_beams() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eff = random_channels(&mut rng, 2, 3);
        let beams = vec![DVector::zeros(3), DVector::zeros(3)];
        let aux = eff.update_aux(&beams, &[1.0, 1.0]);
        assert_eq!(aux.filter, vec![Complex64::new(0.0, 0.0); 2]);
        assert_eq!(aux.mse, vec![1.0, 1.0]);
        assert_eq!(aux.weight, vec![1.0, 1.0]);
        assert_eq!(eff.surrogate(&beams, &aux, &[1.0, 1.0], &[1.0, 1.0]), 0.0);
        assert_eq!(surrogate_rate(1.0, 1.0), 0.0);
    }

    #[test]
    fn scalar_filter_by_hand() {
        // g w = sigma: u = g w / (|g w|^2 + sigma^2) = sigma / (2 sigma^2)
        let sigma = 0.3;
        let eff = EffectiveChannels {
            rows: vec![DVector::from_vec(vec![Complex64::new(0.6, 0.0)])],
        };
        let w = vec![DVector::from_vec(vec![Complex64::new(0.5, 0.0)])];
        let aux = eff.update_aux(&w, &[sigma * sigma]);
        assert!((aux.filter[0] - Complex64::new(1.0 / (2.0 * sigma), 0.0)).norm() < 1e-14);
        assert!((aux.mse[0] - 0.5).abs() < 1e-15);
        assert!((aux.weight[0] - 2.0).abs() < 1e-15);
    }

    // Straight-line evaluation from the raw matrices, independent of the
    // cached effective channels.
    #[test]
    fn rate_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut config = SystemConfig::paper_preset();
        config.shape.r = 1;
        config.shape.s = 2;
        config.antennas = 3;
        config.users.truncate(2);
        let scene = Scene::realize(config, 0).unwrap();
        let phases: Vec<Complex64> = (0..scene.elements())
            .map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * 6.0))
            .collect();
        let freqs = vec![1e6, 7e6];
        let beams: Vec<_> = (0..2).map(|_| random_cvec(&mut rng, 3) * Complex64::from(0.3)).collect();
        let state = SolutionState {
            beams: beams.clone(),
            phases: phases.clone(),
            freqs: freqs.clone(),
            delays: None,
            aux: None,
            objective: 0.0,
        };
        let rates = scene.user_rates(&state);
        for k in 0..2 {
            let theta = crate::array::theta_k(
                1,
                1.0,
                0.0,
                &freqs,
                &scene.layout,
                &scene.config.users[k].position,
            );
            let h = &scene.channels.h_ru[k];
            let gain = |w: &DVector<Complex64>| {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..scene.elements() {
                    for n in 0..3 {
                        acc += h[i] * phases[i] * theta[i] * scene.channels.h_br[(i, n)] * w[n];
                    }
                }
                acc
            };
            let s = gain(&beams[k]).norm_sqr();
            let interf: f64 = (0..2).filter(|&j| j != k).map(|j| gain(&beams[j]).norm_sqr()).sum();
            let direct = (1.0 + s / (interf + scene.config.users[k].noise)).log2();
            assert!((rates[k] - direct).abs() < 1e-12 * direct.max(1.0), "{} vs {}", rates[k], direct);
        }
    }

    proptest! {
        #[test]
        fn tightness_and_minorization(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eff = random_channels(&mut rng, 3, 4);
            let noises = [0.01, 0.1, 0.05];
            let weights = [0.2, 0.5, 0.3];
            let a: Vec<_> = (0..3).map(|_| random_cvec(&mut rng, 4)).collect();
            let b: Vec<_> = (0..3).map(|_| random_cvec(&mut rng, 4)).collect();
            let aux = eff.update_aux(&a, &noises);
            let wsr_a = weighted_sum_rate(&eff.rates(&a, &noises), &weights);
            prop_assert!((eff.surrogate(&a, &aux, &weights, &noises) - wsr_a).abs() < 1e-10);
            for k in 0..3 {
                prop_assert!((aux.weight[k] * aux.mse[k] - 1.0).abs() < 1e-14);
            }
            let wsr_b = weighted_sum_rate(&eff.rates(&b, &noises), &weights);
            prop_assert!(eff.surrogate(&b, &aux, &weights, &noises) <= wsr_b + 1e-10);
        }
    }
}
