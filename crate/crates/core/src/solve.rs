//! Alternating optimization of beams, delay phases and modulation
//! frequencies, plus the conventional-RIS and zero-forcing baselines.

use std::f64::consts::LN_2;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::active::{solve_active, ActiveOptions};
use crate::delay::{solve_delays, RcgOptions};
use crate::error::{Error, Result};
use crate::freq::{gcmma_step, GcmmaOptions};
use crate::joint::joint_ascent;
use crate::rate::{weighted_sum_rate, EffectiveChannels, Scene, SolutionState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    ProposedFdris,
    ConventionalRis,
    ZeroForcing,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::ProposedFdris,
        BaselineKind::ConventionalRis,
        BaselineKind::ZeroForcing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::ProposedFdris => "fdris",
            BaselineKind::ConventionalRis => "ris",
            BaselineKind::ZeroForcing => "zf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fdris" | "proposed-fdris" => Some(BaselineKind::ProposedFdris),
            "ris" | "conventional-ris" => Some(BaselineKind::ConventionalRis),
            "zf" | "zero-forcing" => Some(BaselineKind::ZeroForcing),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop when the weighted sum rate changes by at most this (bits/s/Hz).
    pub tolerance: f64,
    pub max_iterations: usize,
    pub active: ActiveOptions,
    pub rcg: RcgOptions,
    pub gcmma: GcmmaOptions,
    /// Extrapolate along the last iterate difference after every outer
    /// iteration, keeping the result only when it raises the weighted sum rate.
    pub extrapolate: bool,
    /// Largest extrapolation factor tried (doubling from 1).
    pub max_extrapolation: f64,
    /// Also try zero-forcing beams with water-filled powers in the beam
    /// block and keep whichever candidate gives the higher rate.
    pub zf_candidate: bool,
    /// Accelerated WMMSE steps per beam block (channels held fixed).
    pub beam_passes: usize,
    /// Joint beam/phase conjugate-gradient steps on the true rate after the
    /// delay block; 0 disables.
    pub joint_steps: usize,
    /// The joint ascent stops once a window of steps gains at most this.
    pub joint_tolerance: f64,
    /// Also run the proposed scheme from the conventional-RIS solution and
    /// keep the better of the two runs.
    pub ris_warm_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-4,
            max_iterations: 200,
            active: ActiveOptions::default(),
            rcg: RcgOptions::default(),
            gcmma: GcmmaOptions {
                starts: 2,
                ..GcmmaOptions::default()
            },
            extrapolate: true,
            max_extrapolation: 64.0,
            zf_candidate: true,
            beam_passes: 1,
            joint_steps: 10_000,
            joint_tolerance: 1e-6,
            ris_warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub wsr: f64,
    pub surrogate: f64,
    pub rates: Vec<f64>,
    pub mu: f64,
    pub bisections: usize,
    pub rcg_iterations: usize,
    pub gcmma_outer: usize,
    pub gcmma_inner: usize,
    pub joint_steps: usize,
    /// Accepted extrapolation factor, 0 when none was kept.
    pub extrapolation: f64,
    /// Seconds since the start of the solve.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Entry 0 describes the initial point.
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
    /// Whether the kept run started from the conventional-RIS solution.
    pub warm_started: bool,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn wsr(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.wsr).collect()
    }

    pub fn final_wsr(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.wsr)
    }

    /// Largest decrease of the weighted sum rate between iterations.
    pub fn worst_drop(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| w[0].wsr - w[1].wsr)
            .fold(0.0, f64::max)
    }
}

fn entry(scene: &Scene, state: &SolutionState, iteration: usize, start: Instant) -> TraceEntry {
    let rates = scene.user_rates(state);
    let wsr = crate::rate::weighted_sum_rate(&rates, &scene.weights());
    TraceEntry {
        iteration,
        wsr,
        surrogate: wsr,
        rates,
        mu: 0.0,
        bisections: 0,
        rcg_iterations: 0,
        gcmma_outer: 0,
        gcmma_inner: 0,
        joint_steps: 0,
        extrapolation: 0.0,
        elapsed: start.elapsed().as_secs_f64(),
    }
}

fn solver_error(iteration: usize, e: Error) -> Error {
    Error::Solver {
        iteration,
        source: Box::new(e),
    }
}

/// Proposed scheme: alternates the beam, delay and frequency blocks until
/// the weighted sum rate settles. With `ris_warm_start` the conventional-RIS
/// baseline is solved as well and used as a second starting point.
pub fn solve(scene: &Scene, opts: &SolveOptions) -> Result<(SolutionState, SolveTrace)> {
    if scene.config.harmonic == 0 || !opts.ris_warm_start {
        return alternate(scene, SolutionState::initial(scene), opts, scene.config.harmonic != 0);
    }
    let (ris, _) = solve_conventional_ris(scene, opts)?;
    solve_with_ris(scene, &ris, opts)
}

/// [`solve`] with an already computed conventional-RIS solution.
pub fn solve_with_ris(scene: &Scene, ris: &SolutionState, opts: &SolveOptions) -> Result<(SolutionState, SolveTrace)> {
    let with_freq = scene.config.harmonic != 0;
    let cold = alternate(scene, SolutionState::initial(scene), opts, with_freq)?;
    let (state, mut trace) = alternate(scene, warm_start_from_ris(scene, ris), opts, with_freq)?;
    if trace.final_wsr() > cold.1.final_wsr() {
        debug!("warm start from the conventional-RIS solution kept");
        trace.warm_started = true;
        Ok((state, trace))
    } else {
        Ok(cold)
    }
}

/// FD-RIS starting point built from a conventional-RIS solution: same beams
/// and phases with every subarray at `f_min`, where the frequency-dependent
/// terms are nearly common across elements.
pub fn warm_start_from_ris(scene: &Scene, ris: &SolutionState) -> SolutionState {
    let mut state = ris.clone();
    state.freqs = vec![scene.config.f_min; scene.subarrays()];
    state.aux = None;
    state.refresh_delays(scene);
    state.objective = scene.weighted_sum_rate(&state);
    state
}

/// Same alternation on a surface without frequency diversity (`g = 0`):
/// only the phases and beams are optimized. The returned state must be
/// evaluated on `scene.with_harmonic(0)`.
pub fn solve_conventional_ris(scene: &Scene, opts: &SolveOptions) -> Result<(SolutionState, SolveTrace)> {
    let flat = scene.with_harmonic(0);
    alternate(&flat, SolutionState::initial(&flat), opts, false)
}

/// Result of [`optimize_beams`].
#[derive(Debug, Clone)]
pub struct BeamBlock {
    pub beams: Vec<DVector<Complex64>>,
    pub wsr: f64,
    pub mu: f64,
    pub bisections: usize,
    pub passes: usize,
}

fn beam_wsr(eff: &EffectiveChannels, beams: &[DVector<Complex64>], weights: &[f64], noises: &[f64]) -> f64 {
    weighted_sum_rate(&eff.rates(beams, noises), weights)
}

/// Repeated WMMSE steps on fixed channels, each followed by a doubling
/// extrapolation along the last step. Never decreases the rate.
pub fn optimize_beams(
    eff: &EffectiveChannels,
    start: &[DVector<Complex64>],
    weights: &[f64],
    noises: &[f64],
    budget: f64,
    opts: &SolveOptions,
) -> Result<BeamBlock> {
    let mut out = BeamBlock {
        beams: start.to_vec(),
        wsr: beam_wsr(eff, start, weights, noises),
        mu: 0.0,
        bisections: 0,
        passes: 0,
    };
    if opts.zf_candidate && eff.rows.len() <= eff.rows.first().map_or(0, |r| r.len()) {
        let zf = zf_beams(eff, weights, noises, budget);
        let v = beam_wsr(eff, &zf, weights, noises);
        if v > out.wsr {
            out.beams = zf;
            out.wsr = v;
        }
    }
    for _ in 0..opts.beam_passes.max(1) {
        let aux = eff.update_aux(&out.beams, noises);
        let active = solve_active(eff, &aux, weights, budget, &opts.active)?;
        out.passes += 1;
        out.mu = active.mu;
        out.bisections += active.bisections;
        let v = beam_wsr(eff, &active.beams, weights, noises);
        if v < out.wsr {
            break;
        }
        let prev = std::mem::replace(&mut out.beams, active.beams);
        let gain = v - out.wsr;
        out.wsr = v;
        let mut t = 1.0;
        while t <= opts.max_extrapolation {
            let tc = Complex64::from(t);
            let mut y: Vec<DVector<Complex64>> =
                out.beams.iter().zip(&prev).map(|(a, b)| a + (a - b) * tc).collect();
            let power: f64 = y.iter().map(|w| w.norm_squared()).sum();
            if power > budget {
                let s = Complex64::from((budget / power).sqrt());
                y.iter_mut().for_each(|w| *w *= s);
            }
            let vy = beam_wsr(eff, &y, weights, noises);
            if vy <= out.wsr {
                break;
            }
            out.beams = y;
            out.wsr = vy;
            t *= 2.0;
        }
        if gain <= 1e-10 {
            break;
        }
    }
    Ok(out)
}

/// `x + t (x - prev)` on every block, projected back onto the feasible set.
fn extrapolated(scene: &Scene, x: &SolutionState, prev: &SolutionState, t: f64) -> SolutionState {
    let mut y = x.clone();
    let tc = Complex64::from(t);
    y.beams = x
        .beams
        .iter()
        .zip(&prev.beams)
        .map(|(a, b)| a + (a - b) * tc)
        .collect();
    let power = Scene::power(&y);
    if power > scene.config.power {
        let s = Complex64::from((scene.config.power / power).sqrt());
        y.beams.iter_mut().for_each(|w| *w *= s);
    }
    y.phases = x
        .phases
        .iter()
        .zip(&prev.phases)
        .map(|(a, b)| a * Complex64::from_polar(1.0, t * (a * b.conj()).arg()))
        .collect();
    let (lo, hi) = (scene.config.f_min, scene.config.f_max);
    y.freqs = x
        .freqs
        .iter()
        .zip(&prev.freqs)
        .map(|(a, b)| (a + t * (a - b)).clamp(lo, hi))
        .collect();
    y.refresh_delays(scene);
    y
}

/// Doubling search along `x - prev`; returns the best improving point.
fn extrapolate(scene: &Scene, x: &SolutionState, prev: &SolutionState, max_t: f64) -> Option<(SolutionState, f64)> {
    let mut best: Option<(SolutionState, f64)> = None;
    let mut best_wsr = x.objective;
    let mut t = 1.0;
    while t <= max_t {
        let mut y = extrapolated(scene, x, prev, t);
        y.objective = scene.weighted_sum_rate(&y);
        if y.objective > best_wsr {
            best_wsr = y.objective;
            best = Some((y, t));
            t *= 2.0;
        } else {
            break;
        }
    }
    best
}

/// Runs the alternation from `state`.
pub fn alternate(
    scene: &Scene,
    mut state: SolutionState,
    opts: &SolveOptions,
    with_freq: bool,
) -> Result<(SolutionState, SolveTrace)> {
    let start = Instant::now();
    let weights = scene.weights();
    let noises = scene.noises();
    let mut trace = SolveTrace::default();
    let first = entry(scene, &state, 0, start);
    state.objective = first.wsr;
    trace.entries.push(first);

    for q in 1..=opts.max_iterations {
        let prev = state.objective;
        let prev_state = state.clone();

        let eff = scene.effective_for(&state);
        let block = optimize_beams(&eff, &state.beams, &weights, &noises, scene.config.power, opts)
            .map_err(|e| solver_error(q, e))?;
        state.beams = block.beams;

        let aux = scene.update_aux(&state);
        let delay = solve_delays(scene, &state, &aux, &opts.rcg);
        state.phases = delay.phases;

        let mut joint_steps = 0;
        if opts.joint_steps > 0 {
            let j = joint_ascent(scene, &state, opts.joint_steps, opts.joint_tolerance);
            if j.value > scene.weighted_sum_rate(&state) {
                state.beams = j.beams;
                state.phases = j.phases;
                joint_steps = j.iterations;
            }
        }

        let mut aux = scene.update_aux(&state);
        let (mut outer, mut inner) = (0, 0);
        if with_freq {
            let freq = gcmma_step(scene, &state, &aux, &opts.gcmma);
            outer = freq.best.iterations.len();
            inner = freq.inner_total;
            state.freqs = freq.freqs;
        }
        state.refresh_delays(scene);
        let surrogate = scene.surrogate_wsr(&state, &aux);
        aux = scene.update_aux(&state);

        let mut e = entry(scene, &state, q, start);
        e.surrogate = surrogate;
        e.mu = block.mu;
        e.bisections = block.bisections;
        e.rcg_iterations = delay.rcg.iterations;
        e.joint_steps = joint_steps;
        e.gcmma_outer = outer;
        e.gcmma_inner = inner;
        state.objective = e.wsr;
        if opts.extrapolate && q > 1 {
            if let Some((y, t)) = extrapolate(scene, &state, &prev_state, opts.max_extrapolation) {
                state = y;
                aux = scene.update_aux(&state);
                e.rates = scene.user_rates(&state);
                e.wsr = state.objective;
                e.extrapolation = t;
            }
        }
        state.aux = Some(aux);
        debug!("iteration {q}: wsr {:.6}", e.wsr);
        trace.entries.push(e);

        if (state.objective - prev).abs() <= opts.tolerance {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        warn!("alternation stopped after {} iterations without converging", opts.max_iterations);
    }
    Ok((state, trace))
}

/// `W~ = Z^H (Z Z^H)^-1` for the stacked effective channels `Z` (`K x N_t`),
/// computed from a QR factorization of `Z^H`. Falls back to a regularized
/// inverse when `Z` is rank deficient.
pub fn zf_directions(z: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (k, n) = z.shape();
    let zh = z.adjoint();
    if k <= n {
        let qr = zh.clone().qr();
        let r = qr.r();
        let scale = r.diagonal().iter().map(|x| x.norm()).fold(0.0, f64::max);
        let tiny = r.diagonal().iter().map(|x| x.norm()).fold(f64::INFINITY, f64::min);
        if scale > 0.0 && tiny > 1e-10 * scale {
            // Z Z^H = R^H R, so W~ = Q R^-H with R^H Y = I
            let rh = r.adjoint();
            if let Some(y) = rh.solve_lower_triangular(&DMatrix::identity(k, k)) {
                return qr.q() * y;
            }
        }
    }
    warn!("stacked channel matrix is rank deficient; using a regularized inverse");
    let gram = z * &zh;
    let eps = 1e-9 * gram.diagonal().iter().map(|x| x.re).fold(0.0, f64::max).max(1e-300);
    let reg = gram + DMatrix::identity(k, k) * Complex64::from(eps);
    let inv = reg
        .try_inverse()
        .unwrap_or_else(|| DMatrix::zeros(k, k));
    zh * inv
}

/// Weighted water-filling: maximizes `sum w_k log2(1 + P_k gamma_k)` subject
/// to `sum P_k = budget`.
pub fn water_filling(gains: &[f64], weights: &[f64], budget: f64) -> Vec<f64> {
    let k = gains.len();
    if budget <= 0.0 || k == 0 {
        return vec![0.0; k];
    }
    let alloc = |nu: f64| -> Vec<f64> {
        (0..k)
            .map(|i| {
                if gains[i] > 0.0 && weights[i] > 0.0 {
                    (weights[i] / (nu * LN_2) - 1.0 / gains[i]).max(0.0)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let total = |nu: f64| alloc(nu).iter().sum::<f64>();
    if !(0..k).any(|i| gains[i] > 0.0 && weights[i] > 0.0) {
        return vec![0.0; k];
    }
    // total() decreases in nu
    let mut hi = 1.0;
    while total(hi) > budget {
        hi *= 2.0;
    }
    let mut lo = hi;
    while total(lo) < budget && lo > 1e-300 {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let mut p = alloc(hi);
    let s: f64 = p.iter().sum();
    if s > 0.0 {
        // distribute the residual of the bisection proportionally
        p.iter_mut().for_each(|x| *x *= budget / s);
    }
    p
}

/// Zero-forcing beams with water-filled powers for fixed passive variables.
pub fn zf_beams(eff: &EffectiveChannels, weights: &[f64], noises: &[f64], budget: f64) -> Vec<DVector<Complex64>> {
    let z = eff.stacked();
    let dirs = zf_directions(&z);
    let norms: Vec<f64> = (0..dirs.ncols()).map(|k| dirs.column(k).norm()).collect();
    let gains: Vec<f64> = norms
        .iter()
        .zip(noises)
        .map(|(n, s)| if *n > 0.0 { 1.0 / (s * n * n) } else { 0.0 })
        .collect();
    let powers = water_filling(&gains, weights, budget);
    (0..dirs.ncols())
        .map(|k| {
            if norms[k] > 0.0 {
                dirs.column(k) * Complex64::from(powers[k].sqrt() / norms[k])
            } else {
                DVector::zeros(dirs.nrows())
            }
        })
        .collect()
}

/// Zero-forcing baseline: ZF beams alternated with the delay and frequency
/// solvers, keeping the best state seen.
pub fn solve_zf(scene: &Scene, opts: &SolveOptions) -> Result<(SolutionState, SolveTrace)> {
    if scene.users() > scene.antennas() {
        return Err(Error::InvalidParameter(format!(
            "zero forcing needs at least as many antennas ({}) as users ({})",
            scene.antennas(),
            scene.users()
        )));
    }
    let start = Instant::now();
    let weights = scene.weights();
    let noises = scene.noises();
    let mut state = SolutionState::initial(scene);
    let mut trace = SolveTrace::default();
    let mut best: Option<SolutionState> = None;
    let mut prev = f64::NEG_INFINITY;
    let with_freq = scene.config.harmonic != 0;

    for q in 0..=opts.max_iterations {
        state.beams = zf_beams(&scene.effective_for(&state), &weights, &noises, scene.config.power);
        let mut e = entry(scene, &state, q, start);
        state.objective = e.wsr;
        if best.as_ref().is_none_or(|b| e.wsr > b.objective) {
            best = Some(state.clone());
        }
        let change = (e.wsr - prev).abs();
        prev = e.wsr;
        if change <= opts.tolerance || q == opts.max_iterations {
            trace.converged = change <= opts.tolerance;
            trace.entries.push(e);
            break;
        }

        let aux = scene.update_aux(&state);
        let delay = solve_delays(scene, &state, &aux, &opts.rcg);
        state.phases = delay.phases;
        e.rcg_iterations = delay.rcg.iterations;
        if with_freq {
            let aux = scene.update_aux(&state);
            let freq = gcmma_step(scene, &state, &aux, &opts.gcmma);
            e.gcmma_outer = freq.best.iterations.len();
            e.gcmma_inner = freq.inner_total;
            state.freqs = freq.freqs;
        }
        state.refresh_delays(scene);
        trace.entries.push(e);
    }
    let mut best = best.expect("at least one iterate");
    best.aux = Some(scene.update_aux(&best));
    Ok((best, trace))
}

/// Dispatches to the solver for `kind`.
pub fn solve_kind(scene: &Scene, kind: BaselineKind, opts: &SolveOptions) -> Result<(SolutionState, SolveTrace)> {
    match kind {
        BaselineKind::ProposedFdris => solve(scene, opts),
        BaselineKind::ConventionalRis => solve_conventional_ris(scene, opts),
        BaselineKind::ZeroForcing => solve_zf(scene, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(r, c, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn zf_nulls_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.random_range(1..9);
            let k = rng.random_range(1..=n);
            let z = random_cmat(&mut rng, k, n);
            let eff = EffectiveChannels {
                rows: (0..k).map(|i| z.row(i).transpose()).collect(),
            };
            let beams = zf_beams(&eff, &vec![1.0; k], &vec![0.1; k], 2.0);
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        let leak = eff.gain(a, &beams[b]).norm();
                        assert!(leak <= 1e-9 * eff.rows[a].norm() * beams[b].norm());
                    }
                }
            }
            let total: f64 = beams.iter().map(|w| w.norm_squared()).sum();
            assert!((total - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zf_is_matched_filter_for_orthogonal_channels() {
        let z = DMatrix::from_row_slice(
            2,
            3,
            &[
                Complex64::new(1.0, 1.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let d = zf_directions(&z);
        for k in 0..2 {
            let g = z.row(k).adjoint();
            let cos = d.column(k).dotc(&g).norm() / (d.column(k).norm() * g.norm());
            assert!((cos - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn water_filling_examples() {
        let p = water_filling(&[3.0, 3.0], &[1.0, 1.0], 2.0);
        assert!((p[0] - 1.0).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9);
        assert_eq!(water_filling(&[1.0, 2.0], &[1.0, 1.0], 0.0), vec![0.0, 0.0]);
        // a weak channel gets nothing at low power
        let p = water_filling(&[100.0, 0.01], &[1.0, 1.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-9 && p[1] == 0.0);
        // KKT: active users share the same marginal utility
        let g = [2.0, 5.0, 0.7];
        let w = [0.3, 0.5, 0.2];
        let p = water_filling(&g, &w, 4.0);
        assert!((p.iter().sum::<f64>() - 4.0).abs() < 1e-9);
        let marg: Vec<f64> = (0..3).filter(|&i| p[i] > 0.0).map(|i| w[i] * g[i] / (1.0 + p[i] * g[i])).collect();
        for m in &marg {
            assert!((m - marg[0]).abs() < 1e-7 * marg[0]);
        }
    }

    #[test]
    fn zf_falls_back_on_rank_deficiency() {
        let row = [Complex64::new(1.0, 0.5), Complex64::new(-0.2, 0.1)];
        let z = DMatrix::from_row_slice(2, 2, &[row[0], row[1], row[0], row[1]]);
        let d = zf_directions(&z);
        assert!(d.iter().all(|x| x.re.is_finite() && x.im.is_finite()));
    }
}
