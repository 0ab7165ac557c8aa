//! Geometry and time-modulation model of a multi-subarray FD-RIS.
//!
//! The surface is an `I_z x I_y` grid of elements split into `R x S`
//! subarrays of `M x N` elements each. Every subarray is modulated with its
//! own frequency `f_l`; choosing the phase slope so that `P T_l = 2 g pi`
//! keeps only the `g`-th harmonic of the reflected signal, and a per-element
//! time delay `tau_i` rotates that harmonic by `exp(-j 2 pi g f_l tau_i)`.
//!
//! Public index helpers use 1-based indices; everything stored in
//! [`ArrayLayout`] is 0-based.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance on `|P T - 2 z pi|` for the single-harmonic branch.
const HARMONIC_MATCH_TOL: f64 = 1e-12;

/// Subarray grid and element spacing of the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayShape {
    /// Subarray rows.
    pub r: usize,
    /// Subarray columns.
    pub s: usize,
    /// Element rows per subarray.
    pub m: usize,
    /// Element columns per subarray.
    pub n: usize,
    /// Element spacing in metres.
    pub spacing: f64,
    /// Carrier wavelength in metres.
    pub wavelength: f64,
}

impl ArrayShape {
    pub fn new(r: usize, s: usize, m: usize, n: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        let shape = ArrayShape {
            r,
            s,
            m,
            n,
            spacing,
            wavelength,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.s == 0 || self.m == 0 || self.n == 0 {
            return Err(Error::InvalidParameter(format!(
                "array dimensions must be >= 1 (R={}, S={}, M={}, N={})",
                self.r, self.s, self.m, self.n
            )));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "element spacing must be positive, got {}",
                self.spacing
            )));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        Ok(())
    }

    /// Element rows `I_z = R M`.
    pub fn rows(&self) -> usize {
        self.r * self.m
    }

    /// Element columns `I_y = S N`.
    pub fn cols(&self) -> usize {
        self.s * self.n
    }

    /// Total element count `I`.
    pub fn elements(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Subarray count `L = R S`.
    pub fn subarrays(&self) -> usize {
        self.r * self.s
    }
}

/// A point in the surface's local spherical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarPosition {
    /// Distance from the reference element, metres.
    pub distance: f64,
    /// Azimuth angle, radians in `[0, pi]`.
    pub azimuth: f64,
    /// Elevation angle, radians in `[0, pi]`.
    pub elevation: f64,
}

impl PolarPosition {
    pub fn new(distance: f64, azimuth: f64, elevation: f64) -> Result<Self> {
        let p = PolarPosition {
            distance,
            azimuth,
            elevation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "distance must be positive, got {}",
                self.distance
            )));
        }
        for (name, a) in [("azimuth", self.azimuth), ("elevation", self.elevation)] {
            if !(0.0..=PI).contains(&a) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, pi], got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// Time-modulation settings shared by every element.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationParams {
    /// Selected harmonic order `g`.
    pub harmonic: i32,
    /// Reflection amplitude `A_0`.
    pub amplitude: f64,
    /// Initial phase `phi_0`, radians.
    pub phase: f64,
    /// Per-subarray modulation frequencies, Hz.
    pub freqs: Vec<f64>,
    /// Per-element time delays, seconds.
    pub delays: Vec<f64>,
}

impl ModulationParams {
    /// Phase slope of subarray `l` (0-based) that selects harmonic `g`.
    pub fn phase_slope(&self, l: usize) -> f64 {
        2.0 * PI * f64::from(self.harmonic) * self.freqs[l]
    }
}

/// Precomputed index maps for one [`ArrayShape`].
#[derive(Debug, Clone)]
pub struct ArrayLayout {
    pub shape: ArrayShape,
    grid: Vec<(usize, usize)>,
    subarray: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ArrayLayout {
    pub fn new(shape: ArrayShape) -> Result<Self> {
        shape.validate()?;
        let count = shape.elements();
        let mut grid = Vec::with_capacity(count);
        let mut subarray = Vec::with_capacity(count);
        let mut members = vec![Vec::with_capacity(shape.m * shape.n); shape.subarrays()];
        for i in 1..=count {
            let (iz, iy) = element_to_grid(i, &shape)?;
            let l = subarray_of(iz, iy, &shape)?;
            grid.push((iz - 1, iy - 1));
            subarray.push(l - 1);
            members[l - 1].push(i - 1);
        }
        Ok(ArrayLayout {
            shape,
            grid,
            subarray,
            members,
        })
    }

    pub fn elements(&self) -> usize {
        self.grid.len()
    }

    pub fn subarrays(&self) -> usize {
        self.members.len()
    }

    /// 0-based `(i_z, i_y)` of element `i` (0-based).
    pub fn grid(&self, i: usize) -> (usize, usize) {
        self.grid[i]
    }

    /// 0-based subarray of element `i` (0-based).
    pub fn subarray(&self, i: usize) -> usize {
        self.subarray[i]
    }

    /// 0-based element indices belonging to subarray `l` (0-based).
    pub fn members(&self, l: usize) -> &[usize] {
        &self.members[l]
    }

    /// Path-length offset `Gamma` of every element relative to the reference
    /// element, towards/from the direction `(azimuth, elevation)`.
    pub fn path_offsets(&self, azimuth: f64, elevation: f64) -> Vec<f64> {
        let d = self.shape.spacing;
        let (cz, cy) = (azimuth.cos(), azimuth.sin() * elevation.cos());
        self.grid
            .iter()
            .map(|&(iz, iy)| iz as f64 * d * cz + iy as f64 * d * cy)
            .collect()
    }

    /// Element-to-point distances `d_{i_z,i_y} = d + Gamma_{i_z,i_y}`.
    pub fn element_distances(&self, pos: &PolarPosition) -> Vec<f64> {
        self.path_offsets(pos.azimuth, pos.elevation)
            .into_iter()
            .map(|g| pos.distance + g)
            .collect()
    }
}

/// Maps a 1-based element index to its 1-based `(i_z, i_y)` grid position.
///
/// Row-major: `i_z = ceil(i / I_y)` and `i_y = ((i - 1) mod I_y) + 1`.
pub fn element_to_grid(i: usize, shape: &ArrayShape) -> Result<(usize, usize)> {
    let total = shape.elements();
    if i == 0 || i > total {
        return Err(Error::IndexOutOfRange {
            what: "element",
            index: i,
            max: total,
        });
    }
    let cols = shape.cols();
    Ok((i.div_ceil(cols), (i - 1) % cols + 1))
}

/// Inverse of [`element_to_grid`].
pub fn grid_to_element(iz: usize, iy: usize, shape: &ArrayShape) -> Result<usize> {
    check_grid(iz, iy, shape)?;
    Ok((iz - 1) * shape.cols() + iy)
}

/// 1-based subarray index of grid cell `(i_z, i_y)`:
/// `l = (ceil(i_z / M) - 1) S + ceil(i_y / N)`.
pub fn subarray_of(iz: usize, iy: usize, shape: &ArrayShape) -> Result<usize> {
    check_grid(iz, iy, shape)?;
    Ok((iz.div_ceil(shape.m) - 1) * shape.s + iy.div_ceil(shape.n))
}

fn check_grid(iz: usize, iy: usize, shape: &ArrayShape) -> Result<()> {
    if iz == 0 || iz > shape.rows() {
        return Err(Error::IndexOutOfRange {
            what: "grid row",
            index: iz,
            max: shape.rows(),
        });
    }
    if iy == 0 || iy > shape.cols() {
        return Err(Error::IndexOutOfRange {
            what: "grid column",
            index: iy,
            max: shape.cols(),
        });
    }
    Ok(())
}

/// Closed-form Fourier coefficient of the phase-ramp reflection
/// `A_0 exp(j(phi_0 + P t))` over one period `T`, at harmonic `z`.
pub fn fourier_coefficient(
    slope: f64,
    period: f64,
    z: i32,
    amplitude: f64,
    phase: f64,
) -> Complex64 {
    let x = slope * period - 2.0 * PI * f64::from(z);
    let scale = (slope * period).abs().max(2.0 * PI * f64::from(z).abs()).max(1.0);
    let base = Complex64::from_polar(amplitude, phase);
    if x.abs() <= HARMONIC_MATCH_TOL * scale {
        return base;
    }
    let j = Complex64::i();
    j * base * (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, x)) / x
}

/// BS-to-surface steering vectors `(a_R, a_B)`; the LoS channel is
/// `a_R a_B^T`.
pub fn steering_br(
    layout: &ArrayLayout,
    bs: &PolarPosition,
    antennas: usize,
) -> (DVector<Complex64>, DVector<Complex64>) {
    let k = 2.0 * PI / layout.shape.wavelength;
    let a_r = DVector::from_iterator(
        layout.elements(),
        layout
            .path_offsets(bs.azimuth, bs.elevation)
            .into_iter()
            .map(|g| Complex64::from_polar(1.0, -k * g)),
    );
    let step = layout.shape.spacing * bs.azimuth.sin() * bs.elevation.sin();
    let a_b = DVector::from_fn(antennas, |n, _| Complex64::from_polar(1.0, -k * n as f64 * step));
    (a_r, a_b)
}

/// Surface-to-user LoS steering vector `exp(-j 2 pi Gamma^rk / lambda)`.
pub fn steering_ru(layout: &ArrayLayout, user: &PolarPosition) -> DVector<Complex64> {
    let k = 2.0 * PI / layout.shape.wavelength;
    DVector::from_iterator(
        layout.elements(),
        layout
            .path_offsets(user.azimuth, user.elevation)
            .into_iter()
            .map(|g| Complex64::from_polar(1.0, -k * g)),
    )
}

/// Delay-induced phases `exp(-j 2 pi g f_l tau_i)`.
pub fn theta_tilde(harmonic: i32, freqs: &[f64], delays: &[f64], layout: &ArrayLayout) -> Vec<Complex64> {
    let g = f64::from(harmonic);
    delays
        .iter()
        .enumerate()
        .map(|(i, &tau)| Complex64::from_polar(1.0, -2.0 * PI * g * freqs[layout.subarray(i)] * tau))
        .collect()
}

/// Frequency-offset phases seen by a user at `user`, evaluated at `t = 0`:
/// `A_0 exp(j phi_0) exp(-j 2 pi g f_l d^rk_i / c)`.
pub fn theta_k(
    harmonic: i32,
    amplitude: f64,
    phase: f64,
    freqs: &[f64],
    layout: &ArrayLayout,
    user: &PolarPosition,
) -> Vec<Complex64> {
    theta_k_from_distances(harmonic, amplitude, phase, freqs, layout, &layout.element_distances(user))
}

/// Same as [`theta_k`] with precomputed element distances.
pub fn theta_k_from_distances(
    harmonic: i32,
    amplitude: f64,
    phase: f64,
    freqs: &[f64],
    layout: &ArrayLayout,
    distances: &[f64],
) -> Vec<Complex64> {
    let g = f64::from(harmonic);
    distances
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let f = freqs[layout.subarray(i)];
            Complex64::from_polar(amplitude, phase - 2.0 * PI * g * f * d / SPEED_OF_LIGHT)
        })
        .collect()
}

/// Recovers non-negative time delays realizing the unit-modulus phases
/// `phases` at frequencies `freqs`: `tau_i = ((-arg) mod 2 pi) / (2 pi g f_l)`.
pub fn delays_from_phases(
    harmonic: i32,
    phases: &[Complex64],
    freqs: &[f64],
    layout: &ArrayLayout,
) -> Result<Vec<f64>> {
    if harmonic == 0 {
        return Err(Error::ZeroHarmonic);
    }
    let g = f64::from(harmonic);
    phases
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let f = freqs[layout.subarray(i)];
            if !(f > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "modulation frequency must be positive, got {f}"
                )));
            }
            // Sign of g folds into the phase so that tau stays non-negative.
            let cycle = (-p.arg() * g.signum()).rem_euclid(2.0 * PI);
            let tau = cycle / (2.0 * PI * g.abs() * f);
            // rem_euclid can round up to exactly 2 pi.
            let period = 1.0 / (g.abs() * f);
            Ok(if tau >= period { 0.0 } else { tau })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(r: usize, s: usize, m: usize, n: usize) -> ArrayShape {
        ArrayShape::new(r, s, m, n, 0.5, 1.0).unwrap()
    }

    #[test]
    fn element_to_grid_examples() {
        let sh = shape(2, 2, 2, 2);
        assert_eq!(element_to_grid(1, &sh).unwrap(), (1, 1));
        assert_eq!(element_to_grid(4, &sh).unwrap(), (1, 4));
        assert_eq!(element_to_grid(5, &sh).unwrap(), (2, 1));
        assert!(element_to_grid(0, &sh).is_err());
        assert!(element_to_grid(17, &sh).is_err());
    }

    #[test]
    fn element_to_grid_is_bijection() {
        let sh = shape(2, 2, 2, 2);
        let mut seen = vec![vec![false; sh.cols()]; sh.rows()];
        for i in 1..=sh.elements() {
            let (iz, iy) = element_to_grid(i, &sh).unwrap();
            assert!((1..=sh.rows()).contains(&iz) && (1..=sh.cols()).contains(&iy));
            assert!(!seen[iz - 1][iy - 1]);
            seen[iz - 1][iy - 1] = true;
            assert_eq!(grid_to_element(iz, iy, &sh).unwrap(), i);
        }
        assert!(seen.iter().flatten().all(|&b| b));
    }

    #[test]
    fn subarray_examples() {
        let sh = shape(2, 2, 2, 2);
        assert_eq!(subarray_of(1, 1, &sh).unwrap(), 1);
        assert_eq!(subarray_of(3, 3, &sh).unwrap(), 4);
        let mut hits = [0usize; 4];
        for iz in 1..=4 {
            for iy in 1..=4 {
                hits[subarray_of(iz, iy, &sh).unwrap() - 1] += 1;
            }
        }
        assert_eq!(hits, [4, 4, 4, 4]);
        assert!(subarray_of(5, 1, &sh).is_err());
    }

    // The element set of subarray l written in closed form,
    // (r-1)SMN + s~N + (m-1)SN + n, must agree with subarray_of.
    #[test]
    fn closed_form_member_set_agrees_with_subarray_map() {
        for r in 1..=3 {
            for s in 1..=3 {
                for m in 1..=3 {
                    for n in 1..=3 {
                        let sh = shape(r, s, m, n);
                        let layout = ArrayLayout::new(sh).unwrap();
                        for l in 1..=sh.subarrays() {
                            let rr = l.div_ceil(s);
                            let st = (l - 1) % s;
                            let mut set: Vec<usize> = (1..=m)
                                .flat_map(|mm| {
                                    (1..=n).map(move |nn| {
                                        (rr - 1) * s * m * n + st * n + (mm - 1) * s * n + nn
                                    })
                                })
                                .collect();
                            set.sort_unstable();
                            let members: Vec<usize> =
                                layout.members(l - 1).iter().map(|i| i + 1).collect();
                            assert_eq!(set, members, "R={r} S={s} M={m} N={n} l={l}");
                        }
                    }
                }
            }
        }
    }

    fn quadrature(slope: f64, period: f64, z: i32, amp: f64, phase: f64) -> Complex64 {
        let n = 20_000;
        let h = period / n as f64;
        let f = |t: f64| {
            Complex64::from_polar(amp, phase + slope * t)
                * Complex64::from_polar(1.0, -2.0 * PI * f64::from(z) * t / period)
        };
        let mut acc = (f(0.0) + f(period)) * 0.5;
        for k in 1..n {
            acc += f(k as f64 * h);
        }
        acc * h / period
    }

    #[test]
    fn fourier_coefficient_examples() {
        let t = 1e-6;
        let p = 2.0 * PI / t;
        let c = fourier_coefficient(p, t, 1, 1.0, 0.0);
        assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(fourier_coefficient(p, t, 2, 1.0, 0.0).norm() < 1e-12);

        let p3 = 3.0 * PI / t;
        let c3 = fourier_coefficient(p3, t, 1, 1.0, 0.0);
        let expected = Complex64::new(0.0, 2.0 / PI);
        assert!((c3 - expected).norm() < 1e-12);
        assert!((c3 - quadrature(p3, t, 1, 1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn harmonic_selection_against_quadrature() {
        let t = 5e-7;
        for g in [-2, 1, 3] {
            let p = 2.0 * PI * f64::from(g) / t;
            for z in -10..=10 {
                let c = fourier_coefficient(p, t, z, 0.8, 0.3);
                let q = quadrature(p, t, z, 0.8, 0.3);
                assert!((c - q).norm() < 1e-6, "g={g} z={z}");
                if z == g {
                    assert!((c.norm() - 0.8).abs() < 1e-12);
                } else {
                    assert!(c.norm() < 1e-10, "g={g} z={z} |a|={}", c.norm());
                }
            }
        }
    }

    #[test]
    fn steering_reference_and_examples() {
        let sh = ArrayShape::new(2, 2, 2, 2, 0.5, 1.0).unwrap();
        let layout = ArrayLayout::new(sh).unwrap();
        let bs = PolarPosition::new(100.0, 30f64.to_radians(), 120f64.to_radians()).unwrap();
        let (a_r, a_b) = steering_br(&layout, &bs, 3);
        assert!((a_r[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((a_b[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);

        // element (2,2) is 0-based index 1*I_y + 1
        let idx = grid_to_element(2, 2, &sh).unwrap() - 1;
        let th = 30f64.to_radians();
        let ph = 120f64.to_radians();
        let expected = Complex64::from_polar(1.0, -PI * (th.cos() + th.sin() * ph.cos()));
        assert!((a_r[idx] * a_b[0] - expected).norm() < 1e-12);

        let on_axis = PolarPosition::new(10.0, 0.0, 1.0).unwrap();
        let (a_r, a_b) = steering_br(&layout, &on_axis, 3);
        for i in 0..layout.elements() {
            let (iz, _) = layout.grid(i);
            let first_in_row = a_r[iz * sh.cols()];
            assert!((a_r[i] - first_in_row).norm() < 1e-12);
        }
        assert!(a_b.iter().all(|x| (x - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn theta_tilde_examples() {
        let layout = ArrayLayout::new(shape(1, 2, 1, 1)).unwrap();
        let freqs = [1e6, 2e6];
        let v = theta_tilde(1, &freqs, &[0.0, 0.25e-6], &layout);
        assert!((v[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((v[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn theta_k_examples() {
        let sh = ArrayShape::new(2, 2, 2, 2, 0.005, 0.0107).unwrap();
        let layout = ArrayLayout::new(sh).unwrap();
        let user = PolarPosition::new(40.0, PI / 2.0, PI / 6.0).unwrap();

        let flat = theta_k(0, 0.9, 0.4, &[1e7; 4], &layout, &user);
        assert!(flat.iter().all(|x| (x - Complex64::from_polar(0.9, 0.4)).norm() < 1e-15));

        let v = theta_k(1, 1.0, 0.0, &[1e7; 4], &layout, &user);
        let expected = -2.0 * PI * 1e7 * 40.0 / SPEED_OF_LIGHT;
        assert!((expected / (2.0 * PI) + 1.334).abs() < 1e-3);
        assert!((v[0] - Complex64::from_polar(1.0, expected)).norm() < 1e-12);

        // equal frequencies: phase is linear in the element distance
        let d = layout.element_distances(&user);
        for (i, x) in v.iter().enumerate() {
            let want = Complex64::from_polar(1.0, -2.0 * PI * 1e7 * d[i] / SPEED_OF_LIGHT);
            assert!((x - want).norm() < 1e-12);
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn delays_from_phases_examples() {
        let layout = ArrayLayout::new(shape(1, 1, 1, 2)).unwrap();
        let tau = delays_from_phases(1, &[Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)], &[1e6], &layout)
            .unwrap();
        assert_eq!(tau[0], 0.0);
        assert!((tau[1] - 0.5e-6).abs() < 1e-18);
        assert!(matches!(
            delays_from_phases(0, &[Complex64::new(1.0, 0.0); 2], &[1e6], &layout),
            Err(Error::ZeroHarmonic)
        ));
    }

    proptest! {
        #[test]
        fn delay_round_trip(
            angles in proptest::collection::vec(-PI..PI, 8),
            freqs in proptest::collection::vec(2e5f64..2e7, 4),
            g in prop_oneof![Just(-2i32), Just(1), Just(2)],
        ) {
            let layout = ArrayLayout::new(ArrayShape::new(2, 2, 1, 2, 0.5, 1.0).unwrap()).unwrap();
            let phases: Vec<Complex64> = angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect();
            let tau = delays_from_phases(g, &phases, &freqs, &layout).unwrap();
            for (i, &t) in tau.iter().enumerate() {
                let f = freqs[layout.subarray(i)];
                prop_assert!(t >= 0.0 && t < 1.0 / (f64::from(g.abs()) * f));
            }
            let back = theta_tilde(g, &freqs, &tau, &layout);
            for (a, b) in back.iter().zip(&phases) {
                prop_assert!((a - b).norm() < 1e-12);
                prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
