//! Joint Riemannian ascent of the true weighted sum rate over beams and
//! phases at fixed frequencies.
//!
//! Beams live on the sphere `sum_k ||w_k||^2 = P` and phases on the unit
//! circles, so the pair is a product manifold and one conjugate-gradient
//! direction moves both blocks at once.

use std::f64::consts::LN_2;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::rate::{Scene, SolutionState};

/// Per-user `h_k o theta^k`, fixed while the frequencies are.
struct Fixed<'a> {
    scene: &'a Scene,
    cascade: Vec<DVector<Complex64>>,
    weights: Vec<f64>,
    noises: Vec<f64>,
    power: f64,
}

#[derive(Clone)]
struct Point {
    beams: Vec<DVector<Complex64>>,
    phases: DVector<Complex64>,
}

#[derive(Clone)]
struct Tangent {
    beams: Vec<DVector<Complex64>>,
    phases: DVector<Complex64>,
}

impl Tangent {
    fn inner(&self, o: &Tangent) -> f64 {
        self.beams.iter().zip(&o.beams).map(|(a, b)| a.dotc(b).re).sum::<f64>() + self.phases.dotc(&o.phases).re
    }

    fn axpy(&self, t: f64, o: &Tangent) -> Tangent {
        let t = Complex64::from(t);
        Tangent {
            beams: self.beams.iter().zip(&o.beams).map(|(a, b)| a + b * t).collect(),
            phases: &self.phases + &o.phases * t,
        }
    }

    fn sub(&self, o: &Tangent) -> Tangent {
        self.axpy(-1.0, o)
    }
}

impl Fixed<'_> {
    fn value_and_grad(&self, x: &Point, want_grad: bool) -> (f64, Option<Tangent>) {
        let h = &self.scene.channels.h_br;
        let users = self.cascade.len();
        let illum: Vec<DVector<Complex64>> = x.beams.iter().map(|w| h * w).collect();
        let coupled: Vec<DVector<Complex64>> = self.cascade.iter().map(|c| c.component_mul(&x.phases)).collect();
        let s: Vec<Vec<Complex64>> = coupled
            .iter()
            .map(|c| illum.iter().map(|u| c.dot(u)).collect())
            .collect();
        let mut value = 0.0;
        let mut alpha = vec![vec![0.0; users]; users];
        for k in 0..users {
            let total: f64 = s[k].iter().map(|z| z.norm_sqr()).sum::<f64>() + self.noises[k];
            let interference = total - s[k][k].norm_sqr();
            value += self.weights[k] * (total.ln() - interference.ln()) / LN_2;
            for j in 0..users {
                let c = 1.0 / total - if j == k { 0.0 } else { 1.0 / interference };
                alpha[k][j] = self.weights[k] * c / LN_2;
            }
        }
        if !want_grad {
            return (value, None);
        }
        // d f / d conj(x) doubled gives the real gradient as a complex vector
        let mut gv = DVector::<Complex64>::zeros(x.phases.len());
        let rows: Vec<DVector<Complex64>> = coupled.iter().map(|c| h.tr_mul(c)).collect();
        let mut gw: Vec<DVector<Complex64>> = vec![DVector::zeros(h.ncols()); users];
        for k in 0..users {
            for j in 0..users {
                let a = Complex64::from(2.0 * alpha[k][j]) * s[k][j];
                for i in 0..gv.len() {
                    gv[i] += a * (self.cascade[k][i] * illum[j][i]).conj();
                }
                gw[j] += rows[k].map(|z| z.conj()) * a;
            }
        }
        // project onto the tangent spaces
        let radial: f64 = x.beams.iter().zip(&gw).map(|(w, g)| w.dotc(g).re).sum::<f64>() / self.power;
        let beams = gw.iter().zip(&x.beams).map(|(g, w)| g - w * Complex64::from(radial)).collect();
        let phases = DVector::from_fn(gv.len(), |i, _| gv[i] - x.phases[i] * (x.phases[i].conj() * gv[i]).re);
        (value, Some(Tangent { beams, phases }))
    }

    fn transport(&self, x: &Point, t: &Tangent) -> Tangent {
        let radial: f64 = x.beams.iter().zip(&t.beams).map(|(w, g)| w.dotc(g).re).sum::<f64>() / self.power;
        Tangent {
            beams: t.beams.iter().zip(&x.beams).map(|(g, w)| g - w * Complex64::from(radial)).collect(),
            phases: DVector::from_fn(t.phases.len(), |i, _| {
                t.phases[i] - x.phases[i] * (x.phases[i].conj() * t.phases[i]).re
            }),
        }
    }

    fn retract(&self, x: &Point, d: &Tangent, eta: f64) -> Point {
        let e = Complex64::from(eta);
        let mut beams: Vec<DVector<Complex64>> = x.beams.iter().zip(&d.beams).map(|(w, g)| w + g * e).collect();
        let norm: f64 = beams.iter().map(|w| w.norm_squared()).sum();
        let s = Complex64::from((self.power / norm).sqrt());
        beams.iter_mut().for_each(|w| *w *= s);
        let phases = DVector::from_fn(x.phases.len(), |i, _| {
            let z = x.phases[i] + d.phases[i] * e;
            let m = z.norm();
            if m < 1e-300 {
                x.phases[i]
            } else {
                z / m
            }
        });
        Point { beams, phases }
    }
}

/// Outcome of [`joint_ascent`].
#[derive(Debug, Clone)]
pub struct JointResult {
    pub beams: Vec<DVector<Complex64>>,
    pub phases: Vec<Complex64>,
    pub value: f64,
    pub iterations: usize,
}

/// Steps between progress checks in [`joint_ascent`].
pub const WINDOW: usize = 100;

/// Conjugate-gradient ascent from `state` (frequencies held fixed). The
/// beams are rescaled to the full power budget first, which never lowers
/// the rate when the noise is positive. Stops after `max_iter` steps or
/// when [`WINDOW`] consecutive steps gain at most `tol` together.
pub fn joint_ascent(scene: &Scene, state: &SolutionState, max_iter: usize, tol: f64) -> JointResult {
    let power = scene.config.power;
    let fixed = Fixed {
        scene,
        cascade: (0..scene.users())
            .map(|k| {
                let theta = scene.theta_k(k, &state.freqs);
                DVector::from_fn(scene.elements(), |i, _| scene.channels.h_ru[k][i] * theta[i])
            })
            .collect(),
        weights: scene.weights(),
        noises: scene.noises(),
        power,
    };
    let used: f64 = state.beams.iter().map(|w| w.norm_squared()).sum();
    let scale = if used > 0.0 { (power / used).sqrt() } else { 0.0 };
    let mut x = Point {
        beams: state.beams.iter().map(|w| w * Complex64::from(scale)).collect(),
        phases: DVector::from_column_slice(&state.phases),
    };
    let orig = scene.weighted_sum_rate(state);
    let (mut fx, grad) = fixed.value_and_grad(&x, true);
    if used == 0.0 || fx < orig {
        return JointResult {
            beams: state.beams.clone(),
            phases: state.phases.clone(),
            value: orig,
            iterations: 0,
        };
    }
    let mut grad = grad.expect("gradient requested");
    let mut dir = grad.clone();
    let mut eta = 1.0 / grad.inner(&grad).sqrt().max(1e-300);
    let mut iterations = 0;
    let mut checkpoint = fx;
    for _ in 0..max_iter {
        let mut slope = grad.inner(&dir);
        if slope <= 0.0 {
            dir = grad.clone();
            slope = grad.inner(&grad);
        }
        if slope <= 0.0 {
            break;
        }
        let mut step = eta * 2.0;
        let mut accepted = None;
        for _ in 0..60 {
            let y = fixed.retract(&x, &dir, step);
            let (fy, _) = fixed.value_and_grad(&y, false);
            if fy >= fx + 1e-4 * step * slope {
                accepted = Some((y, fy));
                break;
            }
            step *= 0.5;
        }
        let Some((y, fy)) = accepted else { break };
        iterations += 1;
        eta = step;
        let (_, g_new) = fixed.value_and_grad(&y, true);
        let g_new = g_new.expect("gradient requested");
        let old_g = fixed.transport(&y, &grad);
        let old_d = fixed.transport(&y, &dir);
        let beta = (g_new.inner(&g_new.sub(&old_g)) / grad.inner(&grad)).max(0.0);
        dir = g_new.axpy(beta, &old_d);
        grad = g_new;
        x = y;
        fx = fy;
        if iterations % WINDOW == 0 {
            if fx - checkpoint <= tol {
                break;
            }
            checkpoint = fx;
        }
    }
    JointResult {
        beams: x.beams,
        phases: x.phases.iter().copied().collect(),
        value: fx,
        iterations,
    }
}
