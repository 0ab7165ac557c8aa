//! Active beamforming by Lagrange duality and bisection on the power
//! multiplier.
//!
//! With the MMSE variables fixed the surrogate is a concave quadratic in the
//! beams, maximized for a given multiplier `mu` by
//! `w_j(mu) = (A^ + mu I)^+ c_j` with `c_j = w_j W_j a_j / ln 2`.
//! `P(mu) = sum_j ||w_j(mu)||^2` is nonincreasing, so the multiplier that
//! meets the power budget is found by bisection. All evaluations share one
//! eigendecomposition of `A^`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rate::{EffectiveChannels, MmseAux};

/// Relative eigenvalue cutoff for the pseudo-inverse at `mu = 0`.
const PINV_CUTOFF: f64 = 1e-12;

/// `A^ = sum_k w_k W_k A_k / ln 2` and the per-user `a_k`.
#[derive(Debug, Clone)]
pub struct ActiveQuadratics {
    pub a_hat: DMatrix<Complex64>,
    /// `a_k = g_k^H u_k`.
    pub linear: Vec<DVector<Complex64>>,
    /// `w_k W_k a_k / ln 2`.
    pub rhs: Vec<DVector<Complex64>>,
}

pub fn assemble_quadratics(eff: &EffectiveChannels, aux: &MmseAux, weights: &[f64]) -> ActiveQuadratics {
    let n = eff.rows.first().map_or(0, |r| r.len());
    let mut a_hat = DMatrix::<Complex64>::zeros(n, n);
    let mut linear = Vec::with_capacity(eff.rows.len());
    let mut rhs = Vec::with_capacity(eff.rows.len());
    for (k, g) in eff.rows.iter().enumerate() {
        let a_k = g.map(|x| x.conj()) * aux.filter[k];
        let scale = weights[k] * aux.weight[k] / LN_2;
        // A_k = a_k a_k^H
        a_hat.ger(Complex64::from(scale), &a_k, &a_k.map(|x| x.conj()), Complex64::from(1.0));
        rhs.push(&a_k * Complex64::from(scale));
        linear.push(a_k);
    }
    ActiveQuadratics { a_hat, linear, rhs }
}

/// Eigen-factored form of the dual problem: `P(mu)` and `w(mu)` in
/// `O(K N_t^2)` per evaluation.
#[derive(Debug, Clone)]
pub struct DualProblem {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<Complex64>,
    /// `V^H c_j` per user.
    projected: Vec<DVector<Complex64>>,
    cutoff: f64,
}

impl DualProblem {
    pub fn new(q: &ActiveQuadratics) -> Self {
        let n = q.a_hat.nrows();
        // symmetrize against round-off before the Hermitian solver
        let herm = (&q.a_hat + q.a_hat.adjoint()) * Complex64::from(0.5);
        let eig = SymmetricEigen::new(herm);
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let largest = eigenvalues.iter().cloned().fold(0.0, f64::max);
        let vh = eig.eigenvectors.adjoint();
        let projected = q.rhs.iter().map(|c| &vh * c).collect();
        DualProblem {
            eigenvalues,
            eigenvectors: if n == 0 { DMatrix::zeros(0, 0) } else { eig.eigenvectors },
            projected,
            cutoff: PINV_CUTOFF * largest,
        }
    }

    fn inverse_gain(&self, i: usize, mu: f64) -> f64 {
        let d = self.eigenvalues[i] + mu;
        if mu == 0.0 && self.eigenvalues[i] <= self.cutoff {
            0.0
        } else if d > 0.0 {
            1.0 / d
        } else {
            0.0
        }
    }

    pub fn beams(&self, mu: f64) -> Vec<DVector<Complex64>> {
        self.projected
            .iter()
            .map(|p| {
                let scaled = DVector::from_fn(p.len(), |i, _| p[i] * self.inverse_gain(i, mu));
                &self.eigenvectors * scaled
            })
            .collect()
    }

    pub fn power(&self, mu: f64) -> f64 {
        self.projected
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, x)| x.norm_sqr() * self.inverse_gain(i, mu).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// `w_j(mu) = (A^ + mu I)^+ c_j` for every user.
pub fn w_opt(mu: f64, q: &ActiveQuadratics) -> Vec<DVector<Complex64>> {
    DualProblem::new(q).beams(mu)
}

/// `P(mu) = sum_k ||w_k(mu)||^2`.
pub fn total_power(mu: f64, q: &ActiveQuadratics) -> f64 {
    DualProblem::new(q).power(mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveOptions {
    /// Relative width of the final multiplier bracket.
    pub tolerance: f64,
    pub max_doublings: usize,
    pub max_bisections: usize,
}

impl Default for ActiveOptions {
    fn default() -> Self {
        ActiveOptions {
            tolerance: 1e-10,
            max_doublings: 60,
            max_bisections: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActiveSolution {
    pub beams: Vec<DVector<Complex64>>,
    pub mu: f64,
    pub bisections: usize,
}

/// Maximizes the surrogate over the beams subject to the power budget.
pub fn solve_active(
    eff: &EffectiveChannels,
    aux: &MmseAux,
    weights: &[f64],
    budget: f64,
    opts: &ActiveOptions,
) -> Result<ActiveSolution> {
    let q = assemble_quadratics(eff, aux, weights);
    let dual = DualProblem::new(&q);

    let p0 = dual.power(0.0);
    if p0 <= budget {
        return Ok(ActiveSolution {
            beams: dual.beams(0.0),
            mu: 0.0,
            bisections: 0,
        });
    }
    if budget <= 0.0 {
        let n = q.a_hat.nrows();
        return Ok(ActiveSolution {
            beams: vec![DVector::zeros(n); q.rhs.len()],
            mu: f64::INFINITY,
            bisections: 0,
        });
    }

    let mut low = 0.0;
    let mut up = 1.0;
    let mut doublings = 0;
    while dual.power(up) >= budget {
        if doublings == opts.max_doublings {
            return Err(Error::InfeasibleBracket {
                doublings,
                power: dual.power(up),
            });
        }
        low = up;
        up *= 2.0;
        doublings += 1;
    }

    let mut bisections = 0;
    while up - low > opts.tolerance * up && bisections < opts.max_bisections {
        let mid = 0.5 * (low + up);
        if dual.power(mid) >= budget {
            low = mid;
        } else {
            up = mid;
        }
        bisections += 1;
    }

    // P(up) < budget by construction, so the returned beams are feasible.
    Ok(ActiveSolution {
        beams: dual.beams(up),
        mu: up,
        bisections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::{weighted_sum_rate, EffectiveChannels};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cvec(rng: &mut ChaCha8Rng, n: usize) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn instance(seed: u64, k: usize, n: usize) -> (EffectiveChannels, MmseAux, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eff = EffectiveChannels {
            rows: (0..k).map(|_| random_cvec(&mut rng, n)).collect(),
        };
        let beams: Vec<_> = (0..k).map(|_| random_cvec(&mut rng, n)).collect();
        let aux = eff.update_aux(&beams, &vec![0.05; k]);
        let weights = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
        (eff, aux, weights)
    }

    #[test]
    fn zero_filters_give_zero_quadratics() {
        let (eff, mut aux, w) = instance(1, 3, 4);
        aux.filter = vec![Complex64::new(0.0, 0.0); 3];
        let q = assemble_quadratics(&eff, &aux, &w);
        assert!(q.a_hat.iter().all(|x| x.norm() == 0.0));
        assert!(q.linear.iter().all(|a| a.norm() == 0.0));
        assert_eq!(total_power(0.0, &q), 0.0);
        assert_eq!(total_power(3.0, &q), 0.0);
    }

    #[test]
    fn single_user_is_rank_one() {
        let (eff, aux, w) = instance(2, 1, 5);
        let q = assemble_quadratics(&eff, &aux, &w);
        let mut ev: Vec<f64> = SymmetricEigen::new(q.a_hat.clone()).eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(ev[1].abs() < 1e-10 * ev[0]);
    }

    #[test]
    fn a_hat_is_hermitian_psd() {
        for seed in 0..20 {
            let (eff, aux, w) = instance(seed, 4, 6);
            let q = assemble_quadratics(&eff, &aux, &w);
            assert!((&q.a_hat - q.a_hat.adjoint()).norm() < 1e-14 * q.a_hat.norm());
            let ev = SymmetricEigen::new(q.a_hat.clone()).eigenvalues;
            assert!(ev.iter().all(|&l| l >= -1e-10));
        }
    }

    #[test]
    fn diagonal_case() {
        let q = ActiveQuadratics {
            a_hat: DMatrix::identity(3, 3),
            linear: vec![],
            rhs: vec![DVector::from_vec(vec![
                Complex64::new(2.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ])],
        };
        let w = w_opt(1.0, &q);
        assert!((w[0][0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!(w[0][1].norm() < 1e-14 && w[0][2].norm() < 1e-14);

        // P(mu) = sum_j c_j / (lambda_j + mu)^2 for diag A^
        let lambdas = [0.5, 2.0, 3.0];
        let q = ActiveQuadratics {
            a_hat: DMatrix::from_diagonal(&DVector::from_iterator(3, lambdas.iter().map(|&l| Complex64::from(l)))),
            linear: vec![],
            rhs: vec![DVector::from_vec(vec![
                Complex64::new(1.0, 1.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(0.0, -2.0),
            ])],
        };
        for mu in [0.0, 0.3, 4.0] {
            let want: f64 = q.rhs[0]
                .iter()
                .zip(lambdas)
                .map(|(c, l)| c.norm_sqr() / (l + mu).powi(2))
                .sum();
            assert!((total_power(mu, &q) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn large_multiplier_asymptote() {
        let (eff, aux, w) = instance(3, 2, 4);
        let q = assemble_quadratics(&eff, &aux, &w);
        let mu = 1e9;
        let beams = w_opt(mu, &q);
        for (j, b) in beams.iter().enumerate() {
            assert!(b.norm() <= 2.0 * q.rhs[j].norm() / mu);
            let ratio = mu * b.norm() / q.rhs[j].norm();
            assert!((ratio - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn residual_of_linear_system() {
        let (eff, aux, w) = instance(4, 3, 5);
        let q = assemble_quadratics(&eff, &aux, &w);
        let mu = 0.7;
        for (j, b) in w_opt(mu, &q).iter().enumerate() {
            let lhs = &q.a_hat * b + b * Complex64::from(mu);
            assert!((lhs - &q.rhs[j]).norm() < 1e-10 * q.rhs[j].norm().max(1.0));
        }
    }

    #[test]
    fn power_is_nonincreasing_on_a_grid() {
        let (eff, aux, w) = instance(5, 4, 6);
        let q = assemble_quadratics(&eff, &aux, &w);
        let powers: Vec<f64> = (0..10).map(|i| total_power(i as f64 * 0.5, &q)).collect();
        for p in powers.windows(2) {
            assert!(p[1] <= p[0] + 1e-12);
        }
    }

    #[test]
    fn huge_budget_takes_interior_branch() {
        let (eff, aux, w) = instance(6, 2, 4);
        let sol = solve_active(&eff, &aux, &w, 1e12, &ActiveOptions::default()).unwrap();
        assert_eq!(sol.mu, 0.0);
    }

    #[test]
    fn tiny_budget_is_met_tightly() {
        let (eff, aux, w) = instance(7, 3, 4);
        let budget = 1e-6;
        let opts = ActiveOptions {
            tolerance: 1e-12,
            ..Default::default()
        };
        let sol = solve_active(&eff, &aux, &w, budget, &opts).unwrap();
        let p: f64 = sol.beams.iter().map(|b| b.norm_squared()).sum();
        assert!(p <= budget * (1.0 + 1e-9));
        assert!(((p - budget) / budget).abs() < 1e-6);
        // complementary slackness
        assert!(sol.mu * (p - budget) <= 1e-6 * budget);
    }

    #[test]
    fn zero_budget_gives_zero_beams() {
        let (eff, aux, w) = instance(8, 2, 3);
        let sol = solve_active(&eff, &aux, &w, 0.0, &ActiveOptions::default()).unwrap();
        assert!(sol.beams.iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn surrogate_does_not_decrease() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let eff = EffectiveChannels {
            rows: (0..3).map(|_| random_cvec(&mut rng, 4)).collect(),
        };
        let noises = [0.02, 0.02, 0.02];
        let weights = [0.3, 0.3, 0.4];
        let budget = 2.0;
        let start: Vec<_> = (0..3).map(|_| random_cvec(&mut rng, 4) * Complex64::from(0.4)).collect();
        let aux = eff.update_aux(&start, &noises);
        let before = eff.surrogate(&start, &aux, &weights, &noises);
        let sol = solve_active(&eff, &aux, &weights, budget, &ActiveOptions::default()).unwrap();
        let after = eff.surrogate(&sol.beams, &aux, &weights, &noises);
        assert!(after >= before - 1e-12);
        assert!(weighted_sum_rate(&eff.rates(&sol.beams, &noises), &weights) >= after - 1e-10);
    }
}
