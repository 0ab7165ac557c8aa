//! Modulation-frequency design by the globally convergent method of moving
//! asymptotes (GCMMA) on the box `[f_min, f_max]^L`.
//!
//! The objective minimized here is the negated surrogate
//! `g(f) = sum_k v_k^H D_k v_k - 2 Re(v_k^H d_k) - C` with `v_k = conj(diag(Theta_k))`.

use std::f64::consts::{LN_2, PI};

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::array::{ArrayLayout, SPEED_OF_LIGHT};
use crate::rate::{MmseAux, Scene, SolutionState};

/// Quadratic data of the frequency subproblem with beams, delay phases and
/// MMSE variables held fixed.
#[derive(Debug, Clone)]
pub struct FreqObjective {
    pub d_mats: Vec<DMatrix<Complex64>>,
    pub d_vecs: Vec<DVector<Complex64>>,
    pub constant: f64,
    pub harmonic: i32,
    pub amplitude: f64,
    pub phase: f64,
    /// Element-to-user distances, per user.
    pub distances: Vec<Vec<f64>>,
    layout: ArrayLayout,
}

/// `x_kj[i] = h_rk,i theta~_i (H_BR w_j)_i`, so that `g_k w_j = v_k^H x_kj`.
pub fn build_freq_objective(scene: &Scene, state: &SolutionState, aux: &MmseAux) -> FreqObjective {
    let n = scene.elements();
    let lit = scene.illuminations(&state.beams);
    let weights = scene.weights();
    let noises = scene.noises();
    let mut d_mats = Vec::with_capacity(scene.users());
    let mut d_vecs = Vec::with_capacity(scene.users());
    let mut constant = 0.0;
    for k in 0..scene.users() {
        let h = &scene.channels.h_ru[k];
        let scale = weights[k] * aux.weight[k] / LN_2;
        let u = aux.filter[k];
        let mut d = DMatrix::<Complex64>::zeros(n, n);
        let mut dv = DVector::<Complex64>::zeros(n);
        for (j, y) in lit.iter().enumerate() {
            let x = DVector::from_fn(n, |i, _| h[i] * state.phases[i] * y[i]);
            if u.norm_sqr() > 0.0 {
                d.gerc(Complex64::from(scale * u.norm_sqr()), &x, &x, Complex64::from(1.0));
            }
            if j == k {
                dv = x * (u.conj() * scale);
            }
        }
        d_mats.push(d);
        d_vecs.push(dv);
        constant -= weights[k]
            * (aux.weight[k] * (1.0 + u.norm_sqr() * noises[k]) - aux.weight[k].ln() - 1.0)
            / LN_2;
    }
    FreqObjective {
        d_mats,
        d_vecs,
        constant,
        harmonic: scene.config.harmonic,
        amplitude: scene.config.amplitude,
        phase: scene.config.phase,
        distances: (0..scene.users()).map(|k| scene.user_distances(k).to_vec()).collect(),
        layout: scene.layout.clone(),
    }
}

impl FreqObjective {
    pub fn subarrays(&self) -> usize {
        self.layout.subarrays()
    }

    /// `v_k = conj(diag(Theta_k))` at `freqs`.
    fn phasors(&self, k: usize, freqs: &[f64]) -> DVector<Complex64> {
        let g = f64::from(self.harmonic);
        let d = &self.distances[k];
        DVector::from_fn(d.len(), |i, _| {
            let f = freqs[self.layout.subarray(i)];
            Complex64::from_polar(self.amplitude, -self.phase + 2.0 * PI * g * f * d[i] / SPEED_OF_LIGHT)
        })
    }

    pub fn value(&self, freqs: &[f64]) -> f64 {
        (0..self.d_mats.len())
            .map(|k| {
                let v = self.phasors(k, freqs);
                v.dotc(&(&self.d_mats[k] * &v)).re - 2.0 * v.dotc(&self.d_vecs[k]).re
            })
            .sum::<f64>()
            - self.constant
    }

    pub fn gradient(&self, freqs: &[f64]) -> Vec<f64> {
        self.value_and_gradient(freqs).1
    }

    pub fn value_and_gradient(&self, freqs: &[f64]) -> (f64, Vec<f64>) {
        let g = f64::from(self.harmonic);
        let mut grad = vec![0.0; self.subarrays()];
        let mut value = -self.constant;
        for k in 0..self.d_mats.len() {
            let v = self.phasors(k, freqs);
            let dv = &self.d_mats[k] * &v;
            value += v.dotc(&dv).re - 2.0 * v.dotc(&self.d_vecs[k]).re;
            let r = dv - &self.d_vecs[k];
            let d = &self.distances[k];
            for (i, (vi, ri)) in v.iter().zip(r.iter()).enumerate() {
                // dv_i/df_l = j 2 pi g d_i / c * v_i
                let dvi = Complex64::new(0.0, 2.0 * PI * g * d[i] / SPEED_OF_LIGHT) * vi;
                grad[self.layout.subarray(i)] += 2.0 * (dvi.conj() * ri).re;
            }
        }
        (value, grad)
    }
}

pub fn eval_freq_objective(freqs: &[f64], obj: &FreqObjective) -> f64 {
    obj.value(freqs)
}

pub fn freq_gradient(freqs: &[f64], obj: &FreqObjective) -> Vec<f64> {
    obj.gradient(freqs)
}

/// Separable convex model `sum_l p_l/(u_l - f_l) + q_l/(f_l - o_l) + a`
/// expanded at `expansion`.
#[derive(Debug, Clone)]
pub struct MmaSubproblem {
    pub expansion: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub a: f64,
    pub move_low: Vec<f64>,
    pub move_up: Vec<f64>,
    pub rho: f64,
    pub gamma: Vec<f64>,
    pub range: f64,
}

/// Iterates and asymptotes carried between outer iterations.
#[derive(Debug, Clone, Default)]
pub struct MmaHistory {
    /// 1-based outer iteration index of the next subproblem.
    pub iteration: usize,
    /// `f^(z-2)` and `f^(z-3)`.
    pub older: Vec<Vec<f64>>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl MmaHistory {
    pub fn new() -> Self {
        MmaHistory {
            iteration: 1,
            ..Default::default()
        }
    }

    /// Records the subproblem just solved and the point it was expanded at.
    pub fn advance(&mut self, sub: &MmaSubproblem) {
        self.older.insert(0, sub.expansion.clone());
        self.older.truncate(2);
        self.upper = sub.upper.clone();
        self.lower = sub.lower.clone();
        self.iteration += 1;
    }
}

fn adaptation_factor(f1: f64, f2: f64, f3: f64) -> f64 {
    let s = (f1 - f2) * (f2 - f3);
    if s < 0.0 {
        0.7
    } else if s > 0.0 {
        1.2
    } else {
        1.0
    }
}

/// `rho = (1/10L) |grad|^T (f_max - f_min)`, floored at `1e-5 max(|g|, tiny)`.
pub fn initial_rho(value: f64, grad: &[f64], range: f64) -> f64 {
    let l = grad.len().max(1) as f64;
    let rho = grad.iter().map(|g| g.abs()).sum::<f64>() * range / (10.0 * l);
    rho.max(1e-5 * value.abs().max(1e-12))
}

/// Builds the MMA model of `g` around `f` with gradient `grad`.
pub fn build_mma(
    f: &[f64],
    value: f64,
    grad: &[f64],
    history: &MmaHistory,
    rho: f64,
    f_min: f64,
    f_max: f64,
) -> MmaSubproblem {
    let range = f_max - f_min;
    let n = f.len();
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut gamma = vec![1.0; n];
    let adapt = history.iteration >= 3 && history.older.len() == 2 && history.upper.len() == n;
    for l in 0..n {
        if adapt {
            let (f2, f3) = (history.older[0][l], history.older[1][l]);
            gamma[l] = adaptation_factor(f[l], f2, f3);
            let du = (gamma[l] * (history.upper[l] - f2)).clamp(0.01 * range, 10.0 * range);
            let dl = (gamma[l] * (f2 - history.lower[l])).clamp(0.01 * range, 10.0 * range);
            upper[l] = f[l] + du;
            lower[l] = f[l] - dl;
        } else {
            upper[l] = f[l] + range;
            lower[l] = f[l] - range;
        }
    }
    let move_low = (0..n)
        .map(|l| {
            f_min
                .max(lower[l] + 0.1 * (f[l] - lower[l]))
                .max(f[l] - 0.5 * range)
                .min(f[l])
        })
        .collect();
    let move_up = (0..n)
        .map(|l| {
            f_max
                .min(upper[l] - 0.1 * (upper[l] - f[l]))
                .min(f[l] + 0.5 * range)
                .max(f[l])
        })
        .collect();
    let mut sub = MmaSubproblem {
        expansion: f.to_vec(),
        value,
        grad: grad.to_vec(),
        upper,
        lower,
        p: vec![0.0; n],
        q: vec![0.0; n],
        a: 0.0,
        move_low,
        move_up,
        rho,
        gamma,
        range,
    };
    sub.set_rho(rho);
    sub
}

impl MmaSubproblem {
    /// Recomputes `p`, `q` and `a` for a new conservative factor.
    pub fn set_rho(&mut self, rho: f64) {
        self.rho = rho;
        let base = rho / self.range;
        let mut a = self.value;
        for l in 0..self.expansion.len() {
            let (gp, gm) = (self.grad[l].max(0.0), (-self.grad[l]).max(0.0));
            let du = self.upper[l] - self.expansion[l];
            let dl = self.expansion[l] - self.lower[l];
            self.p[l] = du * du * (base + 1.001 * gp + 0.001 * gm);
            self.q[l] = dl * dl * (base + 0.001 * gp + 1.001 * gm);
            a -= self.p[l] / du + self.q[l] / dl;
        }
        self.a = a;
    }

    pub fn approx(&self, f: &[f64]) -> f64 {
        self.a
            + (0..f.len())
                .map(|l| self.p[l] / (self.upper[l] - f[l]) + self.q[l] / (f[l] - self.lower[l]))
                .sum::<f64>()
    }

    /// Distance measure `sum (u-o)(f-f0)^2 / ((u-f)(f-o) range)`; the
    /// conservative term of the model equals `rho * distance(f)`.
    pub fn distance(&self, f: &[f64]) -> f64 {
        (0..f.len())
            .map(|l| {
                let df = f[l] - self.expansion[l];
                (self.upper[l] - self.lower[l]) * df * df
                    / ((self.upper[l] - f[l]) * (f[l] - self.lower[l]) * self.range)
            })
            .sum()
    }

    /// Conservative factor after a rejected candidate `f` whose true value
    /// exceeds the model by `delta`.
    pub fn inflated_rho(&self, f: &[f64], delta: f64) -> f64 {
        let d = self.distance(f);
        let inc = if d > 0.0 { delta / d } else { delta };
        (1.1 * (self.rho + inc)).min(10.0 * self.rho)
    }

    pub fn approx_grad(&self, f: &[f64]) -> Vec<f64> {
        (0..f.len())
            .map(|l| {
                let du = self.upper[l] - f[l];
                let dl = f[l] - self.lower[l];
                self.p[l] / (du * du) - self.q[l] / (dl * dl)
            })
            .collect()
    }
}

/// Exact box-constrained minimizer of the separable model.
pub fn solve_mma(sub: &MmaSubproblem) -> Vec<f64> {
    (0..sub.expansion.len())
        .map(|l| {
            let (p, q) = (sub.p[l], sub.q[l]);
            let f = sub.expansion[l];
            // the model is strictly convex with slope grad[l] at f
            let breve = if (p == 0.0 && q == 0.0) || sub.grad[l] == 0.0 {
                f
            } else if p == 0.0 {
                f64::NEG_INFINITY
            } else if q == 0.0 {
                f64::INFINITY
            } else {
                let r = (q / p).sqrt();
                f + ((sub.upper[l] - f) * r - (f - sub.lower[l])) / (1.0 + r)
            };
            breve.clamp(sub.move_low[l], sub.move_up[l])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcmmaOptions {
    /// Relative tolerance: stop when `|dg| <= tolerance * max(1, |g|)`.
    pub tolerance: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Number of starting points; the first is always the incoming one.
    pub starts: usize,
}

impl Default for GcmmaOptions {
    fn default() -> Self {
        GcmmaOptions {
            tolerance: 1e-6,
            max_outer: 100,
            max_inner: 20,
            starts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcmmaIteration {
    /// `g` at the accepted point.
    pub value: f64,
    /// Model value at the accepted point.
    pub model: f64,
    pub inner: usize,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct GcmmaRun {
    pub freqs: Vec<f64>,
    pub value: f64,
    pub initial: f64,
    pub iterations: Vec<GcmmaIteration>,
    pub capped: bool,
}

#[derive(Debug, Clone)]
pub struct FreqSolution {
    pub freqs: Vec<f64>,
    pub value: f64,
    /// Run that produced `freqs`.
    pub best: GcmmaRun,
    pub runs: usize,
    pub inner_total: usize,
}

/// Single GCMMA run from `start`.
pub fn gcmma_run(obj: &FreqObjective, start: &[f64], f_min: f64, f_max: f64, opts: &GcmmaOptions) -> GcmmaRun {
    let mut f: Vec<f64> = start.iter().map(|x| x.clamp(f_min, f_max)).collect();
    let (mut value, mut grad) = obj.value_and_gradient(&f);
    let initial = value;
    let mut run = GcmmaRun {
        freqs: f.clone(),
        value,
        initial,
        iterations: Vec::new(),
        capped: false,
    };
    if !(f_max > f_min) {
        return run;
    }
    let mut history = MmaHistory::new();
    for _ in 0..opts.max_outer {
        let rho = initial_rho(value, &grad, f_max - f_min);
        let mut sub = build_mma(&f, value, &grad, &history, rho, f_min, f_max);
        let mut cand = solve_mma(&sub);
        let mut cand_value = obj.value(&cand);
        let mut model = sub.approx(&cand);
        let mut inner = 0;
        while model < cand_value && inner < opts.max_inner {
            let rho = sub.inflated_rho(&cand, cand_value - model);
            sub.set_rho(rho);
            cand = solve_mma(&sub);
            cand_value = obj.value(&cand);
            model = sub.approx(&cand);
            inner += 1;
        }
        if model < cand_value {
            run.capped = true;
            warn!("GCMMA inner loop hit its cap of {} passes", opts.max_inner);
            if cand_value > value {
                cand = f.clone();
                cand_value = value;
                model = value;
            }
        }
        history.advance(&sub);
        run.iterations.push(GcmmaIteration {
            value: cand_value,
            model,
            inner,
            rho: sub.rho,
        });
        let change = (cand_value - value).abs();
        f = cand;
        let (v, g) = obj.value_and_gradient(&f);
        value = v;
        grad = g;
        if change <= opts.tolerance * value.abs().max(1.0) {
            break;
        }
    }
    run.freqs = f;
    run.value = value;
    run
}

/// Spread starting points: coordinate `l` of start `s` sits at the
/// fractional position `(s / n + l * 0.618...) mod 1` of the band.
fn start_points(n: usize, l: usize, f_min: f64, f_max: f64) -> Vec<Vec<f64>> {
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    (0..n)
        .map(|s| {
            (0..l)
                .map(|c| {
                    let t = (s as f64 / n as f64 + c as f64 * golden + 0.5 / n as f64).fract();
                    f_min + t * (f_max - f_min)
                })
                .collect()
        })
        .collect()
}

/// Minimizes `g` over the band, starting from `start` plus `opts.starts - 1`
/// spread points, and returns the best run. Never worse than `start`.
pub fn gcmma_solve(obj: &FreqObjective, start: &[f64], f_min: f64, f_max: f64, opts: &GcmmaOptions) -> FreqSolution {
    let mut best = gcmma_run(obj, start, f_min, f_max, opts);
    let mut runs = 1;
    let mut inner_total: usize = best.iterations.iter().map(|i| i.inner).sum();
    if f_max > f_min && opts.starts > 1 {
        for s in start_points(opts.starts - 1, start.len(), f_min, f_max) {
            let run = gcmma_run(obj, &s, f_min, f_max, opts);
            runs += 1;
            inner_total += run.iterations.iter().map(|i| i.inner).sum::<usize>();
            if run.value < best.value {
                best = run;
            }
        }
    }
    FreqSolution {
        freqs: best.freqs.clone(),
        value: best.value,
        best,
        runs,
        inner_total,
    }
}

/// Optimizes the frequencies of `state` with MMSE variables `aux`.
pub fn gcmma_step(scene: &Scene, state: &SolutionState, aux: &MmseAux, opts: &GcmmaOptions) -> FreqSolution {
    let obj = build_freq_objective(scene, state, aux);
    gcmma_solve(&obj, &state.freqs, scene.config.f_min, scene.config.f_max, opts)
}
