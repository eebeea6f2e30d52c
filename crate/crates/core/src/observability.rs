//! Permanent trajectories and first-order observability of the rotor-frame
//! model augmented with a constant load torque.
//!
//! The linearized state is `(δφd, δφq, δω, δθ, δτL)`, the input is the
//! voltage perturbation expressed in the rotor frame of the reference
//! trajectory, and the output is `y = G·δφ + 𝒦ī·δθ`, the current
//! perturbation with the (invertible) rotation to the stator frame dropped.

use nalgebra::{SMatrix, SVector};

use crate::dynamics::{dq_derivatives, MotorParams, MotorStateDq};
use crate::magnetics::{quarter_turn, rotation, solve2, CurrentDq, FluxDq, MagModel};
use crate::{Error, Mat2, Result, Vec2};

pub type Mat5 = SMatrix<f64, 5, 5>;
pub type Mat5x2 = SMatrix<f64, 5, 2>;
pub type Mat2x5 = SMatrix<f64, 2, 5>;
pub type Vec5 = SVector<f64, 5>;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_THRESHOLD: f64 = 1e-9;

/// Index of each component in the linearized state.
pub mod idx {
    pub const PHI_D: usize = 0;
    pub const PHI_Q: usize = 1;
    pub const OMEGA: usize = 2;
    pub const THETA: usize = 3;
    pub const TAU: usize = 4;
}

/// Constant-speed, constant-current operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermanentTrajectory {
    pub omega_bar: f64,
    pub i_bar_dq: Vec2,
    pub phi_bar_dq: Vec2,
    pub u_bar_dq: Vec2,
    pub tau_bar_l: f64,
}

/// Operating point parameterized by speed and dq current; voltage and load
/// torque follow from the equilibrium conditions.
pub fn permanent_trajectory(omega_bar: f64, i_bar: CurrentDq, p: &MotorParams) -> Result<PermanentTrajectory> {
    let k = quarter_turn();
    let phi = p.mag.flux_from_current_exact(i_bar)?.vec();
    let linked = phi + p.mag.magnet_flux();
    let i = i_bar.vec();
    Ok(PermanentTrajectory {
        omega_bar,
        i_bar_dq: i,
        phi_bar_dq: phi,
        u_bar_dq: p.r * i + omega_bar * (k * linked),
        tau_bar_l: p.pole_pairs() * 1.5 * i.dot(&(k * linked)),
    })
}

/// `Φ(φ̄) = φm + φ̄ + 𝒦·[D𝓘(φ̄)]⁻¹·𝒦·𝓘(φ̄)`.
pub fn phi_vector(phi_bar: FluxDq, m: &MagModel) -> Result<Vec2> {
    let k = quarter_turn();
    let g = m.hessian(phi_bar);
    let det = g.determinant();
    if det.abs() < 1e-12 * g.norm_squared() {
        return Err(Error::SingularJacobian {
            condition: crate::magnetics::condition_number(&g),
        });
    }
    let i = m.current_from_flux(phi_bar).vec();
    Ok(m.magnet_flux() + phi_bar.vec() + k * solve2(&g, &(k * i)))
}

/// `ẋ = A x + B δu`, `y = C x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedSystem {
    pub a: Mat5,
    pub b: Mat5x2,
    pub c: Mat2x5,
}

/// Analytic linearization around `traj`.
pub fn linearize(traj: &PermanentTrajectory, p: &MotorParams) -> LinearizedSystem {
    let k = quarter_turn();
    let g = p.mag.hessian(traj.phi_bar_dq.into());
    let psi = traj.phi_bar_dq + p.mag.magnet_flux();
    let n = p.pole_pairs();
    let i = traj.i_bar_dq;

    let mut a = Mat5::zeros();
    let flux = -p.r * g - traj.omega_bar * k;
    let d_omega = -(k * psi);
    let d_theta = -(k * traj.u_bar_dq);
    for r in 0..2 {
        a[(r, idx::PHI_D)] = flux[(r, 0)];
        a[(r, idx::PHI_Q)] = flux[(r, 1)];
        a[(r, idx::OMEGA)] = d_omega[r];
        a[(r, idx::THETA)] = d_theta[r];
    }
    let grad = 1.5 * (g * (k * psi) + k.transpose() * i);
    let scale = n * n / p.j;
    a[(idx::OMEGA, idx::PHI_D)] = scale * grad.x;
    a[(idx::OMEGA, idx::PHI_Q)] = scale * grad.y;
    a[(idx::OMEGA, idx::TAU)] = -scale / n;
    a[(idx::THETA, idx::OMEGA)] = 1.0;

    let mut b = Mat5x2::zeros();
    b[(0, 0)] = 1.0;
    b[(1, 1)] = 1.0;

    LinearizedSystem {
        a,
        b,
        c: output_matrix(&g, i),
    }
}

fn output_matrix(g: &Mat2, i_bar: Vec2) -> Mat2x5 {
    let ki = quarter_turn() * i_bar;
    let mut c = Mat2x5::zeros();
    for r in 0..2 {
        c[(r, idx::PHI_D)] = g[(r, 0)];
        c[(r, idx::PHI_Q)] = g[(r, 1)];
        c[(r, idx::THETA)] = ki[r];
    }
    c
}

/// Time-invariant form of the augmented dynamics around `traj`: the rotor
/// frame sees `u_dq = M_{−δθ}(ū + v)` and the output is `M_{δθ}·i − ī`.
fn relative_field(x: &Vec5, v: Vec2, traj: &PermanentTrajectory, p: &MotorParams) -> (Vec5, Vec2) {
    let dtheta = x[idx::THETA];
    let s = MotorStateDq {
        phi: FluxDq::new(traj.phi_bar_dq.x + x[idx::PHI_D], traj.phi_bar_dq.y + x[idx::PHI_Q]),
        omega: traj.omega_bar + x[idx::OMEGA],
        theta: 0.0,
    };
    let u = rotation(-dtheta) * (traj.u_bar_dq + v);
    let d = dq_derivatives(&s, u, traj.tau_bar_l + x[idx::TAU], p);
    let f = Vec5::new(d.dphi.x, d.dphi.y, d.domega, d.dtheta - traj.omega_bar, 0.0);
    let i = p.mag.current_from_flux(s.phi).vec();
    (f, rotation(dtheta) * i - traj.i_bar_dq)
}

/// Central-difference linearization of the nonlinear model, used to check
/// [`linearize`].
pub fn linearize_numeric(traj: &PermanentTrajectory, p: &MotorParams) -> LinearizedSystem {
    let x0 = Vec5::zeros();
    let scales = [
        traj.phi_bar_dq.norm().max(p.mag.lambda),
        traj.phi_bar_dq.norm().max(p.mag.lambda),
        traj.omega_bar.abs().max(1.0),
        1.0,
        traj.tau_bar_l.abs().max(1.0),
    ];
    let mut sys = LinearizedSystem {
        a: Mat5::zeros(),
        b: Mat5x2::zeros(),
        c: Mat2x5::zeros(),
    };
    for j in 0..5 {
        let h = 1e-6 * scales[j];
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += h;
        xm[j] -= h;
        let (fp, yp) = relative_field(&xp, Vec2::zeros(), traj, p);
        let (fm, ym) = relative_field(&xm, Vec2::zeros(), traj, p);
        sys.a.set_column(j, &((fp - fm) / (2.0 * h)));
        sys.c.set_column(j, &((yp - ym) / (2.0 * h)));
    }
    let hu = 1e-6 * traj.u_bar_dq.norm().max(1.0);
    for j in 0..2 {
        let mut v = Vec2::zeros();
        v[j] = hu;
        let (fp, _) = relative_field(&x0, v, traj, p);
        let (fm, _) = relative_field(&x0, -v, traj, p);
        sys.b.set_column(j, &((fp - fm) / (2.0 * hu)));
    }
    sys
}

/// The same system after the output injection `A + R·E·C` (`E` selects the
/// flux rows). The flux rows then read `[−ω̄𝒦, −𝒦(φ̄+φm), ω̄(φ̄+φm), 0]`:
/// the `δθ` coupling carries an `ω̄` prefactor. Output injection leaves the
/// observability rank and the unobservable subspace unchanged.
pub fn output_injection_form(sys: &LinearizedSystem, p: &MotorParams) -> LinearizedSystem {
    let mut a = sys.a;
    for r in 0..2 {
        for j in 0..5 {
            a[(r, j)] += p.r * sys.c[(r, j)];
        }
    }
    LinearizedSystem { a, ..*sys }
}

/// Diagonal similarity making off-diagonal row and column norms of `a`
/// comparable. Returns the scaling `d` with `Ã = D⁻¹ A D`.
fn balance(a: &Mat5) -> Vec5 {
    let mut d = Vec5::repeat(1.0);
    let mut m = *a;
    for _ in 0..100 {
        let mut converged = true;
        for i in 0..5 {
            let (mut c, mut r) = (0.0, 0.0);
            for j in 0..5 {
                if j != i {
                    c += m[(j, i)] * m[(j, i)];
                    r += m[(i, j)] * m[(i, j)];
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let f = (r.sqrt() / c.sqrt()).sqrt();
            if (f - 1.0).abs() > 1e-3 {
                converged = false;
            }
            d[i] *= f;
            for j in 0..5 {
                m[(j, i)] *= f;
                m[(i, j)] /= f;
            }
        }
        if converged {
            break;
        }
    }
    d
}

/// Rank of `[C; CA; …; CA⁴]` and an orthonormal-ish basis of its kernel in
/// the original coordinates.
///
/// The state is rescaled by a balancing similarity and the stacked rows are
/// normalized before the SVD, so Wb, rad/s and N·m columns are comparable.
pub fn observability_rank(sys: &LinearizedSystem) -> (usize, Vec<Vec5>) {
    let d = balance(&sys.a);
    let dm = Mat5::from_diagonal(&d);
    let dinv = Mat5::from_diagonal(&d.map(|x| 1.0 / x));
    let a = dinv * sys.a * dm;
    let c = sys.c * dm;

    let mut obs = SMatrix::<f64, 10, 5>::zeros();
    let mut block = c;
    for k in 0..5 {
        for r in 0..2 {
            let row = block.row(r);
            let norm = row.norm();
            if norm > 0.0 {
                obs.set_row(2 * k + r, &(row / norm));
            }
        }
        block *= a;
    }

    let svd = obs.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let sigma = svd.singular_values;
    let s1 = sigma.max();
    let rank = if s1 <= 0.0 {
        0
    } else {
        sigma.iter().filter(|&&s| s > RANK_THRESHOLD * s1).count()
    };

    let mut kernel = Vec::new();
    for (j, &s) in sigma.iter().enumerate() {
        if s1 <= 0.0 || s <= RANK_THRESHOLD * s1 {
            let w: Vec5 = v_t.row(j).transpose();
            let x = dm * w;
            kernel.push(x / x.norm());
        }
    }
    (rank, kernel)
}

/// q-axis current that produces load torque `tau` at `ī = (0, i_q)`.
pub fn current_for_torque(tau: f64, p: &MotorParams) -> Result<f64> {
    let torque = |iq: f64| -> Result<f64> { Ok(permanent_trajectory(0.0, CurrentDq::new(0.0, iq), p)?.tau_bar_l) };
    let mut iq = tau / (1.5 * p.pole_pairs() * p.mag.lambda);
    for _ in 0..50 {
        let f = torque(iq)? - tau;
        if f.abs() <= 1e-12 * tau.abs().max(1.0) {
            return Ok(iq);
        }
        let h = 1e-6 * iq.abs().max(1.0);
        let df = (torque(iq + h)? - torque(iq - h)?) / (2.0 * h);
        if df == 0.0 || !df.is_finite() {
            break;
        }
        iq -= f / df;
    }
    let residual = (torque(iq)? - tau).abs();
    Err(Error::NonConvergent {
        iterations: 50,
        residual,
    })
}
