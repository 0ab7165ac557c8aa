//! Time-delay phase design by Riemannian conjugate gradient on the product
//! of unit circles.
//!
//! With beams, frequencies and MMSE variables fixed, the surrogate is the
//! quadratic `f(v) = -v^H B v + 2 Re(v^H b) + C` in `v = conj(theta~)`,
//! maximized subject to `|v_i| = 1`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::rate::{MmseAux, Scene, SolutionState};

/// `f(v) = -v^H B v + 2 Re(v^H b) + C`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub b_mat: DMatrix<Complex64>,
    pub b_vec: DVector<Complex64>,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn value(&self, v: &DVector<Complex64>) -> f64 {
        let bv = &self.b_mat * v;
        -v.dotc(&bv).re + 2.0 * v.dotc(&self.b_vec).re + self.constant
    }

    /// Euclidean gradient `-2 B v + 2 b` for the real inner product
    /// `Re(x^H y)`.
    pub fn euclidean_grad(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        (&self.b_vec - &self.b_mat * v) * Complex64::from(2.0)
    }
}

/// Builds the delay-phase quadratic for the given beams and frequencies.
///
/// With `v_kj = diag(h_rk) Theta_k H_BR w_j`, `g_k w_j = v^H v_kj`, so
/// `B = sum_k c_k |u_k|^2 sum_j v_kj v_kj^H`, `b = sum_k c_k u_k^* v_kk` and
/// `c_k = w_k W_k / ln 2`.
pub fn assemble_delay_quadratic(scene: &Scene, state: &SolutionState, aux: &MmseAux) -> QuadraticForm {
    let n = scene.elements();
    let lit = scene.illuminations(&state.beams);
    let weights = scene.weights();
    let noises = scene.noises();
    let mut b_mat = DMatrix::<Complex64>::zeros(n, n);
    let mut b_vec = DVector::<Complex64>::zeros(n);
    let mut constant = 0.0;
    for k in 0..scene.users() {
        let theta = scene.theta_k(k, &state.freqs);
        let h = &scene.channels.h_ru[k];
        let c = weights[k] * aux.weight[k] / LN_2;
        let u = aux.filter[k];
        for (j, x) in lit.iter().enumerate() {
            let v = DVector::from_fn(n, |i, _| h[i] * theta[i] * x[i]);
            if u.norm_sqr() > 0.0 {
                b_mat.gerc(Complex64::from(c * u.norm_sqr()), &v, &v, Complex64::from(1.0));
            }
            if j == k {
                b_vec.axpy(u.conj() * c, &v, Complex64::from(1.0));
            }
        }
        constant -= weights[k]
            * (aux.weight[k] * (1.0 + u.norm_sqr() * noises[k]) - aux.weight[k].ln() - 1.0)
            / LN_2;
    }
    QuadraticForm {
        b_mat,
        b_vec,
        constant,
    }
}

/// Projection onto the tangent space at `v`:
/// `x_i - Re(x_i conj(v_i)) v_i`.
pub fn project_tangent(v: &DVector<Complex64>, x: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_fn(v.len(), |i, _| x[i] - v[i] * (x[i] * v[i].conj()).re)
}

pub fn riemannian_grad(v: &DVector<Complex64>, euclid: &DVector<Complex64>) -> DVector<Complex64> {
    project_tangent(v, euclid)
}

/// Entrywise `x_i / |x_i|`, keeping `prev_i` where `x_i` vanishes.
pub fn retract(x: &DVector<Complex64>, prev: &DVector<Complex64>) -> DVector<Complex64> {
    DVector::from_fn(x.len(), |i, _| {
        let m = x[i].norm();
        if m < 1e-300 {
            prev[i]
        } else {
            x[i] / m
        }
    })
}

fn inner(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    a.dotc(b).re
}

/// Polak-Ribiere coefficient and conjugate direction for ascent.
///
/// `prev` carries the previous gradient and direction, already transported
/// to the current tangent space, plus the previous gradient's squared norm.
pub fn polak_ribiere(
    grad: &DVector<Complex64>,
    prev: Option<(&DVector<Complex64>, &DVector<Complex64>, f64)>,
) -> (f64, DVector<Complex64>) {
    let Some((prev_grad, prev_dir, prev_norm_sq)) = prev else {
        return (0.0, grad.clone());
    };
    if prev_norm_sq <= 0.0 {
        return (0.0, grad.clone());
    }
    let beta = (inner(grad, &(grad - prev_grad)) / prev_norm_sq).max(0.0);
    let dir = grad + prev_dir * Complex64::from(beta);
    if inner(&dir, grad) <= 0.0 {
        (0.0, grad.clone())
    } else {
        (beta, dir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcgOptions {
    /// Stop when successive objective values differ by at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-increase coefficient.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Also stop when the Riemannian gradient norm falls to this.
    pub gradient_tolerance: f64,
}

impl Default for RcgOptions {
    fn default() -> Self {
        RcgOptions {
            tolerance: 1e-8,
            max_iterations: 500,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
            gradient_tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RcgResult {
    /// Maximizer `v` (unit modulus).
    pub point: DVector<Complex64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub grad_norm: f64,
    /// Largest deviation from unit modulus over all iterates.
    pub max_modulus_error: f64,
}

/// Maximizes `q` over the unit-circle product starting from `start`.
pub fn maximize_on_circles(q: &QuadraticForm, start: &DVector<Complex64>, opts: &RcgOptions) -> RcgResult {
    let mut x = retract(start, &DVector::from_element(start.len(), Complex64::new(1.0, 0.0)));
    let mut fx = q.value(&x);
    let mut grad = riemannian_grad(&x, &q.euclidean_grad(&x));
    let mut history = vec![fx];
    let modulus_err = |v: &DVector<Complex64>| v.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
    let mut max_modulus_error = modulus_err(&x);
    let mut prev: Option<(DVector<Complex64>, DVector<Complex64>, f64)> = None;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let gnorm = grad.norm();
        if gnorm == 0.0 || gnorm <= opts.gradient_tolerance {
            break;
        }
        let transported = prev
            .as_ref()
            .map(|(g, d, n)| (project_tangent(&x, g), project_tangent(&x, d), *n));
        let (_, dir) = polak_ribiere(
            &grad,
            transported.as_ref().map(|(g, d, n)| (g, d, *n)),
        );
        let slope = inner(&grad, &dir);

        let mut step = 1.0 / gnorm;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let cand = retract(&(&x + &dir * Complex64::from(step)), &x);
            let fc = q.value(&cand);
            if fc >= fx + opts.armijo * step * slope && fc > fx {
                accepted = Some((cand, fc));
                break;
            }
            step *= opts.backtrack;
        }
        iterations += 1;
        let Some((next, fnext)) = accepted else {
            // no ascent along the direction: treat as stationary
            break;
        };

        let delta = fnext - fx;
        max_modulus_error = max_modulus_error.max(modulus_err(&next));
        prev = Some((grad.clone(), dir, gnorm * gnorm));
        x = next;
        fx = fnext;
        history.push(fx);
        grad = riemannian_grad(&x, &q.euclidean_grad(&x));
        if delta.abs() <= opts.tolerance {
            break;
        }
    }

    RcgResult {
        grad_norm: grad.norm(),
        point: x,
        value: fx,
        iterations,
        history,
        max_modulus_error,
    }
}

#[derive(Debug, Clone)]
pub struct DelaySolution {
    /// New `theta~` (unit modulus).
    pub phases: Vec<Complex64>,
    /// Delays realizing `phases` at the state's frequencies.
    pub delays: Option<Vec<f64>>,
    pub rcg: RcgResult,
}

/// Optimizes the delay phases of `state` with the MMSE variables `aux`.
pub fn solve_delays(scene: &Scene, state: &SolutionState, aux: &MmseAux, opts: &RcgOptions) -> DelaySolution {
    let q = assemble_delay_quadratic(scene, state, aux);
    let start = DVector::from_iterator(state.phases.len(), state.phases.iter().map(|p| p.conj()));
    let rcg = maximize_on_circles(&q, &start, opts);
    let phases: Vec<Complex64> = rcg.point.iter().map(|p| p.conj()).collect();
    let delays = if scene.config.harmonic == 0 {
        None
    } else {
        crate::array::delays_from_phases(scene.config.harmonic, &phases, &state.freqs, &scene.layout).ok()
    };
    DelaySolution { phases, delays, rcg }
}
