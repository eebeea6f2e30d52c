//! Static magnetic model of the saturated PMSM.
//!
//! Currents derive from a magnetic energy `H(φd, φq)`: a quadratic part
//! `φd²/(2Ld) + φq²/(2Lq)` plus the five cubic/quartic terms compatible with
//! d-axis mirror symmetry. All maps below are analytic in the flux; the
//! inverse map (current → flux) is computed by damped Newton iteration.

use serde::{Deserialize, Serialize};

use crate::{Error, Mat2, Result, Vec2};

/// Newton tolerance on the current residual, relative to `max(1, |i|)`.
pub const INVERSION_TOLERANCE: f64 = 1e-9;
const MAX_NEWTON_STEPS: usize = 50;
const MAX_HALVINGS: usize = 20;
const MAX_CONDITION: f64 = 1e12;

/// `M_μ`, the rotation by `mu`.
pub fn rotation(mu: f64) -> Mat2 {
    let (s, c) = mu.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// The quarter-turn matrix `[[0, −1], [1, 0]]`.
pub fn quarter_turn() -> Mat2 {
    Mat2::new(0.0, -1.0, 1.0, 0.0)
}

/// `M_μ · sym · M_μᵀ` for a symmetric `sym`.
///
/// Written as isotropic part plus a deviatoric part rotated by `2μ`, so the
/// result is exactly symmetric and exactly constant in `μ` when `sym` is a
/// multiple of the identity.
pub fn conjugate_symmetric(mu: f64, sym: &Mat2) -> Mat2 {
    let mean = 0.5 * (sym[(0, 0)] + sym[(1, 1)]);
    let half_diff = 0.5 * (sym[(0, 0)] - sym[(1, 1)]);
    let off = 0.5 * (sym[(0, 1)] + sym[(1, 0)]);
    let (s2, c2) = (2.0 * mu).sin_cos();
    let h = half_diff * c2 - off * s2;
    let r = half_diff * s2 + off * c2;
    Mat2::new(mean + h, r, r, mean - h)
}

/// 2-norm condition number of a 2×2 matrix.
pub fn condition_number(m: &Mat2) -> f64 {
    // singular values from the eigenvalues of MᵀM
    let mtm = m.transpose() * m;
    let tr = mtm.trace();
    let det = mtm.determinant().max(0.0);
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let smax = (0.5 * tr + disc).sqrt();
    let smin2 = 0.5 * tr - disc;
    if smin2 <= 0.0 {
        return f64::INFINITY;
    }
    let smin = smin2.sqrt();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Flux linkage produced by the stator currents (magnet flux excluded), Wb.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FluxDq {
    pub d: f64,
    pub q: f64,
}

impl FluxDq {
    pub const ZERO: FluxDq = FluxDq { d: 0.0, q: 0.0 };

    pub fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn vec(self) -> Vec2 {
        Vec2::new(self.d, self.q)
    }

    pub fn norm(self) -> f64 {
        self.d.hypot(self.q)
    }
}

impl From<Vec2> for FluxDq {
    fn from(v: Vec2) -> Self {
        Self { d: v.x, q: v.y }
    }
}

/// Stator current in the rotor frame, A.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurrentDq {
    pub d: f64,
    pub q: f64,
}

impl CurrentDq {
    pub const ZERO: CurrentDq = CurrentDq { d: 0.0, q: 0.0 };

    pub fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn vec(self) -> Vec2 {
        Vec2::new(self.d, self.q)
    }

    pub fn norm(self) -> f64 {
        self.d.hypot(self.q)
    }
}

impl From<Vec2> for CurrentDq {
    fn from(v: Vec2) -> Self {
        Self { d: v.x, q: v.y }
    }
}

/// Saturation coefficients of the cubic and quartic energy terms.
///
/// Stored unnormalized: `a30` multiplies `φd³`, `a12` multiplies `φd·φq²`,
/// `a40` multiplies `φd⁴`, `a22` multiplies `φd²·φq²`, `a04` multiplies `φq⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SaturationCoeffs {
    pub a30: f64,
    pub a12: f64,
    pub a40: f64,
    pub a22: f64,
    pub a04: f64,
}

impl SaturationCoeffs {
    /// `[a30, a12, a40, a22, a04]`.
    pub fn as_array(&self) -> [f64; 5] {
        [self.a30, self.a12, self.a40, self.a22, self.a04]
    }
}

/// Dimensionless saturation coefficients as printed in motor data sheets:
/// `α30·Ld²·In`, `α12·Ld·Lq·In`, `α40·Ld³·In²`, `α22·Ld·Lq²·In²`, `α04·Lq³·In²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizedSaturation {
    pub a30: f64,
    pub a12: f64,
    pub a40: f64,
    pub a22: f64,
    pub a04: f64,
}

impl NormalizedSaturation {
    fn normalizers(ld: f64, lq: f64, rated_current: f64) -> [f64; 5] {
        let i = rated_current;
        [
            ld * ld * i,
            ld * lq * i,
            ld.powi(3) * i * i,
            ld * lq * lq * i * i,
            lq.powi(3) * i * i,
        ]
    }

    pub fn denormalize(&self, ld: f64, lq: f64, rated_current: f64) -> SaturationCoeffs {
        let k = Self::normalizers(ld, lq, rated_current);
        SaturationCoeffs {
            a30: self.a30 / k[0],
            a12: self.a12 / k[1],
            a40: self.a40 / k[2],
            a22: self.a22 / k[3],
            a04: self.a04 / k[4],
        }
    }

    pub fn normalize(c: &SaturationCoeffs, ld: f64, lq: f64, rated_current: f64) -> Self {
        let k = Self::normalizers(ld, lq, rated_current);
        Self {
            a30: c.a30 * k[0],
            a12: c.a12 * k[1],
            a40: c.a40 * k[2],
            a22: c.a22 * k[3],
            a04: c.a04 * k[4],
        }
    }
}

/// Magnetic model: self-inductances, magnet flux and saturation terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagModel {
    pub ld: f64,
    pub lq: f64,
    pub lambda: f64,
    pub sat: SaturationCoeffs,
}

impl MagModel {
    pub fn new(ld: f64, lq: f64, lambda: f64, sat: SaturationCoeffs) -> Result<Self> {
        let m = Self { ld, lq, lambda, sat };
        m.validate()?;
        Ok(m)
    }

    pub fn unsaturated(ld: f64, lq: f64, lambda: f64) -> Result<Self> {
        Self::new(ld, lq, lambda, SaturationCoeffs::default())
    }

    /// Magnetic data of the 1.5 kW reference test motor.
    pub fn reference() -> Self {
        let (ld, lq) = (7.9e-3, 8.2e-3);
        let sat = NormalizedSaturation {
            a30: 0.0551,
            a12: 0.0545,
            a40: 0.0170,
            a22: 0.0249,
            a04: 0.0067,
        }
        .denormalize(ld, lq, 5.19);
        Self {
            ld,
            lq,
            lambda: 0.155,
            sat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ld.is_finite() && self.ld > 0.0) {
            return Err(Error::validation("Ld", "must be finite and > 0"));
        }
        if !(self.lq.is_finite() && self.lq > 0.0) {
            return Err(Error::validation("Lq", "must be finite and > 0"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::validation("lambda", "must be finite and >= 0"));
        }
        let s = &self.sat;
        for (name, v) in [
            ("a30", s.a30),
            ("a12", s.a12),
            ("a40", s.a40),
            ("a22", s.a22),
            ("a04", s.a04),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Same inductances and magnet, all saturation coefficients zero.
    pub fn without_saturation(&self) -> Self {
        Self {
            sat: SaturationCoeffs::default(),
            ..*self
        }
    }

    /// Saturation coefficients multiplied by `s`.
    pub fn with_saturation_scaled(&self, s: f64) -> Self {
        let c = self.sat;
        Self {
            sat: SaturationCoeffs {
                a30: s * c.a30,
                a12: s * c.a12,
                a40: s * c.a40,
                a22: s * c.a22,
                a04: s * c.a04,
            },
            ..*self
        }
    }

    /// Magnet flux vector `(λ, 0)`.
    pub fn magnet_flux(&self) -> Vec2 {
        Vec2::new(self.lambda, 0.0)
    }

    /// Magnetic energy `H(φ)`.
    pub fn energy(&self, phi: FluxDq) -> f64 {
        let (d, q) = (phi.d, phi.q);
        let s = &self.sat;
        let (d2, q2) = (d * d, q * q);
        d2 / (2.0 * self.ld)
            + q2 / (2.0 * self.lq)
            + s.a30 * d2 * d
            + s.a12 * d * q2
            + s.a40 * d2 * d2
            + s.a22 * d2 * q2
            + s.a04 * q2 * q2
    }

    /// Flux–current magnetization curves: the gradient of [`energy`](Self::energy).
    pub fn current_from_flux(&self, phi: FluxDq) -> CurrentDq {
        let (d, q) = (phi.d, phi.q);
        let s = &self.sat;
        let (d2, q2) = (d * d, q * q);
        CurrentDq {
            d: d / self.ld
                + 3.0 * s.a30 * d2
                + s.a12 * q2
                + 4.0 * s.a40 * d2 * d
                + 2.0 * s.a22 * d * q2,
            q: q / self.lq + 2.0 * s.a12 * d * q + 2.0 * s.a22 * d2 * q + 4.0 * s.a04 * q2 * q,
        }
    }

    /// Second derivatives of the energy, `D𝓘(φ)`.
    pub fn hessian(&self, phi: FluxDq) -> Mat2 {
        let (d, q) = (phi.d, phi.q);
        let s = &self.sat;
        let (d2, q2) = (d * d, q * q);
        let hdd = 1.0 / self.ld + 6.0 * s.a30 * d + 12.0 * s.a40 * d2 + 2.0 * s.a22 * q2;
        let hdq = 2.0 * s.a12 * q + 4.0 * s.a22 * d * q;
        let hqq = 1.0 / self.lq + 2.0 * s.a12 * d + 2.0 * s.a22 * d2 + 12.0 * s.a04 * q2;
        Mat2::new(hdd, hdq, hdq, hqq)
    }

    /// Explicit inverse of the magnetization curves, first order in the
    /// saturation coefficients.
    pub fn flux_from_current_first_order(&self, i: CurrentDq) -> FluxDq {
        let (ld, lq) = (self.ld, self.lq);
        let (id, iq) = (i.d, i.q);
        let s = &self.sat;
        FluxDq {
            d: ld
                * (id
                    - 3.0 * s.a30 * ld * ld * id * id
                    - s.a12 * lq * lq * iq * iq
                    - 4.0 * s.a40 * ld.powi(3) * id.powi(3)
                    - 2.0 * s.a22 * ld * lq * lq * id * iq * iq),
            q: lq
                * (iq
                    - 2.0 * s.a12 * ld * lq * id * iq
                    - 2.0 * s.a22 * ld * ld * lq * id * id * iq
                    - 4.0 * s.a04 * lq.powi(3) * iq.powi(3)),
        }
    }

    /// Exact inverse of the magnetization curves by damped Newton iteration,
    /// seeded with [`flux_from_current_first_order`](Self::flux_from_current_first_order).
    pub fn flux_from_current_exact(&self, i: CurrentDq) -> Result<FluxDq> {
        let target = i.vec();
        let tol = INVERSION_TOLERANCE * target.norm().max(1.0);
        let mut phi = self.flux_from_current_first_order(i).vec();
        let mut res = self.current_from_flux(phi.into()).vec() - target;
        let mut res_norm = res.norm();
        for _ in 0..MAX_NEWTON_STEPS {
            if res_norm <= tol {
                return Ok(self.polish(phi, target, res_norm).into());
            }
            let g = self.hessian(phi.into());
            let cond = condition_number(&g);
            if !(cond <= MAX_CONDITION) {
                return Err(Error::SingularJacobian { condition: cond });
            }
            let step = solve2(&g, &res);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let trial = phi - scale * step;
                let trial_res = self.current_from_flux(trial.into()).vec() - target;
                let trial_norm = trial_res.norm();
                if trial_norm < res_norm || trial_norm <= tol {
                    phi = trial;
                    res = trial_res;
                    res_norm = trial_norm;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if res_norm <= tol {
            Ok(self.polish(phi, target, res_norm).into())
        } else {
            Err(Error::NonConvergent {
                iterations: MAX_NEWTON_STEPS,
                residual: res_norm,
            })
        }
    }

    /// Undamped Newton steps past the tolerance, down to rounding level.
    fn polish(&self, mut phi: Vec2, target: Vec2, mut res_norm: f64) -> Vec2 {
        for _ in 0..2 {
            let res = self.current_from_flux(phi.into()).vec() - target;
            let trial = phi - solve2(&self.hessian(phi.into()), &res);
            let trial_norm = (self.current_from_flux(trial.into()).vec() - target).norm();
            if !(trial_norm < res_norm) {
                break;
            }
            phi = trial;
            res_norm = trial_norm;
        }
        phi
    }

    /// `G(i) = D𝓘(𝓘⁻¹(i))` from its explicit first-order expansion.
    pub fn g_matrix_of_current(&self, i: CurrentDq) -> Mat2 {
        let (ld, lq) = (self.ld, self.lq);
        let (id, iq) = (i.d, i.q);
        let s = &self.sat;
        let gdd = 1.0 / ld + 6.0 * s.a30 * ld * id + 12.0 * s.a40 * ld * ld * id * id
            + 2.0 * s.a22 * lq * lq * iq * iq;
        let gdq = 2.0 * s.a12 * lq * iq + 4.0 * s.a22 * ld * id * lq * iq;
        let gqq = 1.0 / lq + 2.0 * s.a12 * ld * id + 2.0 * s.a22 * ld * ld * id * id
            + 12.0 * s.a04 * lq * lq * iq * iq;
        Mat2::new(gdd, gdq, gdq, gqq)
    }

    /// Incremental inductance matrix, the inverse of [`g_matrix_of_current`](Self::g_matrix_of_current).
    pub fn inductance_matrix(&self, i: CurrentDq) -> Result<Mat2> {
        let g = self.g_matrix_of_current(i);
        let det = g.determinant();
        let scale = g.norm_squared();
        if !(det.abs() >= 1e-12 * scale) || scale == 0.0 {
            return Err(Error::SingularJacobian {
                condition: condition_number(&g),
            });
        }
        let inv = Mat2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det;
        // symmetric by construction; average the rounding away
        let off = 0.5 * (inv[(0, 1)] + inv[(1, 0)]);
        Ok(Mat2::new(inv[(0, 0)], off, off, inv[(1, 1)]))
    }

    /// Saliency matrix `S(μ, ī) = M_μ · D𝓘(𝓘⁻¹(M_μᵀ ī)) · M_μᵀ`.
    pub fn saliency_matrix(&self, mu: f64, i_bar: Vec2) -> Result<Mat2> {
        let i_dq = rotation(mu).transpose() * i_bar;
        let phi = self.flux_from_current_exact(i_dq.into())?;
        Ok(conjugate_symmetric(mu, &self.hessian(phi)))
    }
}

/// Solve `m·x = b` for a 2×2 system by Cramer's rule.
pub(crate) fn solve2(m: &Mat2, b: &Vec2) -> Vec2 {
    let det = m.determinant();
    Vec2::new(
        (b.x * m[(1, 1)] - m[(0, 1)] * b.y) / det,
        (m[(0, 0)] * b.y - m[(1, 0)] * b.x) / det,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const RATED_CURRENT: f64 = 5.19;

    fn random_flux(rng: &mut ChaCha8Rng, radius: f64) -> FluxDq {
        let r = radius * rng.gen::<f64>().sqrt();
        let a = rng.gen_range(-PI..PI);
        FluxDq::new(r * a.cos(), r * a.sin())
    }

    fn random_current(rng: &mut ChaCha8Rng, radius: f64) -> CurrentDq {
        let f = random_flux(rng, radius);
        CurrentDq::new(f.d, f.q)
    }

    #[test]
    fn rotation_special_angles() {
        assert_eq!(rotation(0.0), Mat2::identity());
        let q = rotation(PI / 2.0);
        assert!((q - quarter_turn()).abs().max() < 1e-15);
        let m = rotation(0.83);
        assert!((m.determinant() - 1.0).abs() < 1e-15);
        assert!((m * m.transpose() - Mat2::identity()).abs().max() < 1e-15);
    }

    #[test]
    fn rotation_derivative_matches_quarter_turn() {
        let (mu, h) = (0.3, 1e-5);
        let fd = (rotation(mu + h) - rotation(mu - h)) / (2.0 * h);
        let k = quarter_turn();
        assert!((fd - k * rotation(mu)).abs().max() < 1e-8);
        assert!((fd - rotation(mu) * k).abs().max() < 1e-8);
    }

    #[test]
    fn conjugation_matches_matrix_product() {
        let s = Mat2::new(3.0, 0.7, 0.7, -1.2);
        for mu in [-2.0, -0.4, 0.0, 0.9, 3.1] {
            let r = rotation(mu);
            let direct = r * s * r.transpose();
            assert!((conjugate_symmetric(mu, &s) - direct).abs().max() < 1e-14);
        }
    }

    #[test]
    fn energy_values() {
        let m = MagModel::reference();
        assert_eq!(m.energy(FluxDq::ZERO), 0.0);
        let lin = MagModel::unsaturated(7.9e-3, 8.2e-3, 0.155).unwrap();
        let h = lin.energy(FluxDq::new(0.1, 0.0));
        assert!((h - 0.632_911_392_405_063).abs() < 1e-12);
    }

    #[test]
    fn energy_mirror_symmetry() {
        let m = MagModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let phi = random_flux(&mut rng, 0.3);
            let h1 = m.energy(phi);
            let h2 = m.energy(FluxDq::new(phi.d, -phi.q));
            assert_eq!(h1, h2);
            let i1 = m.current_from_flux(phi);
            let i2 = m.current_from_flux(FluxDq::new(phi.d, -phi.q));
            assert_eq!(i1.d, i2.d);
            assert_eq!(i1.q, -i2.q);
        }
    }

    #[test]
    fn linear_current_map() {
        let m = MagModel::unsaturated(7.9e-3, 8.2e-3, 0.155).unwrap();
        let i = m.current_from_flux(FluxDq::new(0.05, -0.02));
        assert!((i.d - 0.05 / 7.9e-3).abs() < 1e-12);
        assert!((i.q + 0.02 / 8.2e-3).abs() < 1e-12);
        assert_eq!(MagModel::reference().current_from_flux(FluxDq::ZERO), CurrentDq::ZERO);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MagModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let phi = random_flux(&mut rng, 1.5 * m.lambda);
            let h = 1e-6 * phi.norm().max(1.0);
            let fd_d = (m.energy(FluxDq::new(phi.d + h, phi.q))
                - m.energy(FluxDq::new(phi.d - h, phi.q)))
                / (2.0 * h);
            let fd_q = (m.energy(FluxDq::new(phi.d, phi.q + h))
                - m.energy(FluxDq::new(phi.d, phi.q - h)))
                / (2.0 * h);
            let i = m.current_from_flux(phi);
            let scale = i.norm().max(1.0);
            assert!((fd_d - i.d).abs() <= 1e-6 * scale, "{phi:?}");
            assert!((fd_q - i.q).abs() <= 1e-6 * scale, "{phi:?}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let m = MagModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            m.hessian(FluxDq::ZERO),
            Mat2::new(1.0 / m.ld, 0.0, 0.0, 1.0 / m.lq)
        );
        for _ in 0..100 {
            let phi = random_flux(&mut rng, 1.5 * m.lambda);
            let g = m.hessian(phi);
            assert_eq!(g[(0, 1)].to_bits(), g[(1, 0)].to_bits());
            let h = 1e-6;
            let dd = (m.current_from_flux(FluxDq::new(phi.d + h, phi.q)).vec()
                - m.current_from_flux(FluxDq::new(phi.d - h, phi.q)).vec())
                / (2.0 * h);
            let dq = (m.current_from_flux(FluxDq::new(phi.d, phi.q + h)).vec()
                - m.current_from_flux(FluxDq::new(phi.d, phi.q - h)).vec())
                / (2.0 * h);
            let fd = Mat2::from_columns(&[dd, dq]);
            let scale = g.norm();
            assert!((fd - g).abs().max() <= 1e-6 * scale);
            assert!((fd[(0, 1)] - fd[(1, 0)]).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn first_order_inverse_linear_case() {
        let m = MagModel::reference().without_saturation();
        let phi = m.flux_from_current_first_order(CurrentDq::new(2.0, -3.0));
        assert_eq!(phi, FluxDq::new(2.0 * m.ld, -3.0 * m.lq));
        assert_eq!(
            MagModel::reference().flux_from_current_first_order(CurrentDq::ZERO),
            FluxDq::ZERO
        );
    }

    fn first_order_roundtrip_error(m: &MagModel) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..16 {
            let a = k as f64 * PI / 8.0;
            let i = CurrentDq::new(RATED_CURRENT * a.cos(), RATED_CURRENT * a.sin());
            let back = m.current_from_flux(m.flux_from_current_first_order(i));
            worst = worst.max((back.vec() - i.vec()).norm());
        }
        worst
    }

    #[test]
    fn first_order_inverse_error_is_second_order() {
        let base = MagModel::reference();
        let e: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&s| first_order_roundtrip_error(&base.with_saturation_scaled(s)))
            .collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn exact_inverse_roundtrip() {
        let m = MagModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(m.flux_from_current_exact(CurrentDq::ZERO).unwrap(), FluxDq::ZERO);
        for _ in 0..200 {
            let i = random_current(&mut rng, 1.5 * RATED_CURRENT);
            let phi = m.flux_from_current_exact(i).unwrap();
            let back = m.current_from_flux(phi);
            assert!((back.vec() - i.vec()).norm() <= 1e-9 * i.norm().max(1.0));
        }
        // and out to twice the rated current
        for _ in 0..200 {
            let i = random_current(&mut rng, 2.0 * RATED_CURRENT);
            assert!(m.flux_from_current_exact(i).is_ok());
        }
    }

    #[test]
    fn exact_inverse_linear_case_is_exact() {
        let m = MagModel::reference().without_saturation();
        let phi = m.flux_from_current_exact(CurrentDq::new(4.0, 1.5)).unwrap();
        assert_eq!(phi, FluxDq::new(4.0 * m.ld, 1.5 * m.lq));
    }

    #[test]
    fn exact_inverse_reports_singular_jacobian() {
        // a strongly negative cubic term makes the energy non-convex near the seed
        let sat = SaturationCoeffs {
            a30: -5.0e3,
            ..Default::default()
        };
        let m = MagModel::new(7.9e-3, 8.2e-3, 0.155, sat).unwrap();
        let err = m.flux_from_current_exact(CurrentDq::new(20.0, 0.0)).unwrap_err();
        assert!(matches!(
            err,
            Error::SingularJacobian { .. } | Error::NonConvergent { .. }
        ));
    }

    #[test]
    fn g_matrix_at_zero_current() {
        let m = MagModel::reference();
        let g = m.g_matrix_of_current(CurrentDq::ZERO);
        assert!((g[(0, 0)] - 126.582_278_481).abs() < 1e-6);
        assert!((g[(1, 1)] - 121.951_219_512).abs() < 1e-6);
        assert_eq!(g[(0, 1)], 0.0);
    }

    fn g_discrepancy(m: &MagModel) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..12 {
            let a = k as f64 * PI / 6.0 + 0.1;
            let i = CurrentDq::new(RATED_CURRENT * a.cos(), RATED_CURRENT * a.sin());
            let g = m.g_matrix_of_current(i);
            let exact = m.hessian(m.flux_from_current_exact(i).unwrap());
            worst = worst.max((g - exact).abs().max());
        }
        worst
    }

    #[test]
    fn g_matrix_agrees_with_exact_hessian_to_first_order() {
        let base = MagModel::reference();
        let e: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&s| g_discrepancy(&base.with_saturation_scaled(s)))
            .collect();
        for w in e.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn inductance_matrix_inverts_g() {
        let m = MagModel::reference();
        let l0 = m.inductance_matrix(CurrentDq::ZERO).unwrap();
        assert!((l0 - Mat2::new(m.ld, 0.0, 0.0, m.lq)).abs().max() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let i = random_current(&mut rng, 1.5 * RATED_CURRENT);
            let l = m.inductance_matrix(i).unwrap();
            assert_eq!(l[(0, 1)], l[(1, 0)]);
            let prod = l * m.g_matrix_of_current(i);
            assert!((prod - Mat2::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn inductance_matrix_singular() {
        let sat = SaturationCoeffs {
            a30: -1.0 / (6.0 * 7.9e-3 * 7.9e-3 * 1.0),
            ..Default::default()
        };
        // G_dd vanishes at i_d = 1 A
        let m = MagModel::new(7.9e-3, 8.2e-3, 0.155, sat).unwrap();
        assert!(matches!(
            m.inductance_matrix(CurrentDq::new(1.0, 0.0)),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn saliency_unsaturated_closed_form() {
        let m = MagModel::unsaturated(7.9e-3, 8.2e-3, 0.155).unwrap();
        let (ld, lq) = (m.ld, m.lq);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let mu = rng.gen_range(-PI..PI);
            let ib = random_current(&mut rng, 1.5 * RATED_CURRENT).vec();
            let s = m.saliency_matrix(mu, ib).unwrap();
            let base = (ld + lq) / (2.0 * ld * lq);
            let k = (lq - ld) / (ld + lq);
            let (s2, c2) = (2.0 * mu).sin_cos();
            let closed = base * Mat2::new(1.0 + k * c2, k * s2, k * s2, 1.0 - k * c2);
            assert!((s - closed).abs().max() < 1e-12);
            let shifted = m.saliency_matrix(mu + PI, ib).unwrap();
            assert!((s - shifted).abs().max() < 1e-12);
        }
    }

    #[test]
    fn saliency_at_zero_angle_is_hessian() {
        let m = MagModel::reference();
        let ib = Vec2::new(3.0, 2.0);
        let s = m.saliency_matrix(0.0, ib).unwrap();
        let h = m.hessian(m.flux_from_current_exact(ib.into()).unwrap());
        assert!((s - h).abs().max() < 1e-12 * h.norm());
    }

    #[test]
    fn saliency_without_geometric_saliency_is_constant() {
        let m = MagModel::unsaturated(8.0e-3, 8.0e-3, 0.155).unwrap();
        let ib = Vec2::new(1.0, -4.0);
        let s0 = m.saliency_matrix(0.0, ib).unwrap();
        for k in 0..50 {
            let s = m.saliency_matrix(-PI + k as f64 * 0.13, ib).unwrap();
            assert!((s - s0).abs().max() <= 1e-15);
        }
    }

    #[test]
    fn denormalization_roundtrip() {
        let m = MagModel::reference();
        assert!((m.sat.a30 - 170.1).abs() < 0.1, "{}", m.sat.a30);
        let back = NormalizedSaturation::normalize(&m.sat, m.ld, m.lq, RATED_CURRENT);
        for (a, b) in [
            (back.a30, 0.0551),
            (back.a12, 0.0545),
            (back.a40, 0.0170),
            (back.a22, 0.0249),
            (back.a04, 0.0067),
        ] {
            assert!(((a - b) / b).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_inductance() {
        assert!(matches!(
            MagModel::unsaturated(-1.0, 1e-3, 0.1),
            Err(Error::Validation { ref field, .. }) if field == "Ld"
        ));
        assert!(MagModel::unsaturated(1e-3, 1e-3, -0.1).is_err());
    }
}
