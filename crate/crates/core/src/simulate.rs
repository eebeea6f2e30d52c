//! Fixed-step closed-loop integration and the averaging check.
//!
//! The plant is integrated in the γ–δ frame with classical RK4. The control
//! law is evaluated at every RK4 stage; the injected voltage is sampled once
//! per step at the step midpoint and held, so square-wave edges always fall
//! on step boundaries when `dt` divides the injection period.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::{
    gd_current, gd_derivatives, ControlOutput, DriveProfiles, InjectionSpec, MotorParams,
    MotorStateGd, SensorlessController,
};
use crate::{Error, Result, Vec2};

/// Integration steps per injection period.
pub const STEPS_PER_PERIOD: usize = 64;

/// Fraction of the horizon discarded before measuring averaging errors.
pub const AVERAGING_TRANSIENT_FRACTION: f64 = 0.2;

/// One classical fourth-order Runge–Kutta step.
///
/// `f(t, x, dx)` writes the derivative of `x` at `t` into `dx`.
pub fn rk4_step<F>(mut f: F, x: &[f64], t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    f(t, x, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(t + 0.5 * dt, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(t + 0.5 * dt, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(t + dt, &tmp, &mut k4)?;

    let out: Vec<f64> = (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite { t: t + dt })
    }
}

/// Everything needed to run one closed-loop scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub params: MotorParams,
    pub profiles: DriveProfiles,
    pub inj: InjectionSpec,
    pub t_end: f64,
    pub dt: f64,
    pub initial: MotorStateGd,
    /// Standard deviation of additive noise on recorded currents, A.
    pub noise_std: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Step that puts [`STEPS_PER_PERIOD`] steps in one injection period.
    pub fn default_dt(inj: &InjectionSpec) -> f64 {
        inj.period() / STEPS_PER_PERIOD as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.inj.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::validation("dt", "must be finite and > 0"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::validation("t_end", "must be finite and > 0"));
        }
        if self.inj.is_active() && self.dt > Self::default_dt(&self.inj) * (1.0 + 1e-9) {
            return Err(Error::validation(
                "dt",
                format!(
                    "must not exceed a 1/{STEPS_PER_PERIOD} injection period ({:e} s) while injecting",
                    Self::default_dt(&self.inj)
                ),
            ));
        }
        let (start, end) = self.profiles.domain();
        if start > 0.0 || end < self.t_end {
            return Err(Error::validation(
                "profiles",
                format!("must cover [0, {}] s, cover [{start}, {end}]", self.t_end),
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::validation("noise_std", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize + 1
    }

    /// Same scenario at injection pulsation `omega_inj`, with `dt` re-derived.
    pub fn with_pulsation(&self, omega_inj: f64) -> Self {
        let inj = self.inj.with_pulsation(omega_inj);
        Self {
            inj,
            dt: Self::default_dt(&inj),
            ..self.clone()
        }
    }

    /// Same scenario with the injection switched off (step unchanged).
    pub fn without_injection(&self) -> Self {
        Self {
            inj: self.inj.with_amplitude(Vec2::zeros()),
            ..self.clone()
        }
    }
}

/// Demodulated currents and angle estimate attached to one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleEstimate {
    pub i_bar: Vec2,
    pub i_tilde: Vec2,
    /// Estimated electrical angle, unwrapped near `θc`.
    pub theta_hat: f64,
    /// `θ̂ − θ` wrapped to (−π, π], rad.
    pub error: f64,
}

/// Uniformly sampled closed-loop record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<MotorStateGd>,
    /// Measured currents (noise included) in γ–δ.
    pub i_gd: Vec<Vec2>,
    /// Applied voltage (injection included) in γ–δ.
    pub u_gd: Vec<Vec2>,
    /// Filled by [`crate::estimator::estimate_trajectory`]; `None` during
    /// demodulator warm-up, between decimated updates, or when not run.
    pub estimates: Vec<Option<SampleEstimate>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> Option<f64> {
        (self.t.len() >= 2).then(|| self.t[1] - self.t[0])
    }
}

const STATE_LEN: usize = 5;

fn unpack(x: &[f64]) -> MotorStateGd {
    MotorStateGd {
        phi_gd: Vec2::new(x[0], x[1]),
        omega: x[2],
        theta: x[3],
        theta_c: x[4],
    }
}

/// Integrate the γ–δ plant under `ctrl` plus the configured injection.
pub fn run_closed_loop(cfg: &ScenarioConfig, ctrl: &dyn SensorlessController) -> Result<Trajectory> {
    cfg.validate()?;
    let p = &cfg.params;
    let n_samples = cfg.sample_count();
    let dt = cfg.dt;
    let t_end = cfg.t_end;

    let eta0 = ctrl.initial_eta();
    let eta_dim = ctrl.eta_dim();
    if eta0.len() != eta_dim {
        return Err(Error::validation("eta", "initial state has the wrong dimension"));
    }
    let s0 = cfg.initial;
    let mut x: Vec<f64> = vec![s0.phi_gd.x, s0.phi_gd.y, s0.omega, s0.theta, s0.theta_c];
    x.extend_from_slice(&eta0);

    let mut noise = if cfg.noise_std > 0.0 {
        let dist = Normal::new(0.0, cfg.noise_std)
            .map_err(|e| Error::validation("noise_std", e.to_string()))?;
        Some((ChaCha8Rng::seed_from_u64(cfg.seed), dist))
    } else {
        None
    };

    let control_at = |t: f64, x: &[f64]| -> Result<(MotorStateGd, Vec2, ControlOutput)> {
        let s = unpack(x);
        let i = gd_current(s.phi_gd, s.theta - s.theta_c, &p.mag);
        let out = ctrl.control(i, s.theta_c, &x[STATE_LEN..], t.clamp(0.0, t_end))?;
        if out.d_eta.len() != eta_dim {
            return Err(Error::validation("eta", "controller returned wrong derivative size"));
        }
        Ok((s, i, out))
    };

    let mut traj = Trajectory {
        t: Vec::with_capacity(n_samples),
        states: Vec::with_capacity(n_samples),
        i_gd: Vec::with_capacity(n_samples),
        u_gd: Vec::with_capacity(n_samples),
        estimates: Vec::with_capacity(n_samples),
    };

    for k in 0..n_samples {
        let t = k as f64 * dt;
        let u_inj = cfg.inj.voltage(t + 0.5 * dt);

        let (s, i, out) = control_at(t, &x)?;
        let mut i_meas = i;
        if let Some((rng, dist)) = noise.as_mut() {
            i_meas += Vec2::new(dist.sample(rng), dist.sample(rng));
        }
        traj.t.push(t);
        traj.states.push(s);
        traj.i_gd.push(i_meas);
        traj.u_gd.push(out.u_gd + u_inj);
        traj.estimates.push(None);

        if k + 1 == n_samples {
            break;
        }
        x = rk4_step(
            |ts, xs, dx| {
                let (s, _, out) = control_at(ts, xs)?;
                let tau_l = cfg.profiles.tau_l.eval(ts.clamp(0.0, t_end))?;
                let d = gd_derivatives(&s, out.u_gd + u_inj, out.omega_c, tau_l, p);
                dx[0] = d.dphi_gd.x;
                dx[1] = d.dphi_gd.y;
                dx[2] = d.domega;
                dx[3] = d.dtheta;
                dx[4] = d.dtheta_c;
                dx[STATE_LEN..].copy_from_slice(&out.d_eta);
                Ok(())
            },
            &x,
            t,
            dt,
        )?;
    }
    Ok(traj)
}

/// The same closed loop with the injection amplitude forced to zero.
pub fn run_averaged(cfg: &ScenarioConfig, ctrl: &dyn SensorlessController) -> Result<Trajectory> {
    run_closed_loop(&cfg.without_injection(), ctrl)
}

/// Full-versus-averaged discrepancy at one injection pulsation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AveragingRow {
    pub omega_inj: f64,
    /// `max|θ − θ̄| + T_scale·max|ω − ω̄|` with `T_scale = Ld/R`.
    pub e_mech: f64,
    pub e_theta: f64,
    pub e_omega: f64,
    /// `max‖φ − φ̄ − (ũ/Ω)F(Ωt)‖`.
    pub e_flux: f64,
    /// `max‖φ − φ̄‖`.
    pub e_flux_raw: f64,
}

/// Run full and averaged systems for each pulsation and tabulate their
/// discrepancy over the final part of the horizon.
pub fn verify_averaging(
    cfg: &ScenarioConfig,
    ctrl: &(dyn SensorlessController + Sync),
    omegas: &[f64],
) -> Result<Vec<AveragingRow>> {
    if omegas.len() < 3 {
        return Err(Error::validation("omegas", "need at least three pulsations"));
    }
    if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::validation("omegas", "must be finite and > 0"));
    }
    let t_scale = cfg.params.mag.ld / cfg.params.r;

    let runs: Vec<Result<(Trajectory, Trajectory, ScenarioConfig)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = omegas
            .iter()
            .map(|&w| {
                scope.spawn(move || {
                    let c = cfg.with_pulsation(w);
                    let full = run_closed_loop(&c, ctrl)?;
                    let avg = run_averaged(&c, ctrl)?;
                    Ok((full, avg, c))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("averaging worker panicked")).collect()
    });

    let mut rows = Vec::with_capacity(omegas.len());
    for run in runs {
        let (full, avg, c) = run?;
        let start = (AVERAGING_TRANSIENT_FRACTION * full.len() as f64).ceil() as usize;
        let (mut e_theta, mut e_omega, mut e_flux, mut e_raw) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for k in start..full.len() {
            let (a, b) = (&full.states[k], &avg.states[k]);
            let dphi = a.phi_gd - b.phi_gd;
            e_theta = e_theta.max((a.theta - b.theta).abs());
            e_omega = e_omega.max((a.omega - b.omega).abs());
            e_raw = e_raw.max(dphi.norm());
            e_flux = e_flux.max((dphi - c.inj.flux_ripple(full.t[k])).norm());
        }
        rows.push(AveragingRow {
            omega_inj: c.inj.omega_inj,
            e_mech: e_theta + t_scale * e_omega,
            e_theta,
            e_omega,
            e_flux,
            e_flux_raw: e_raw,
        });
    }
    Ok(rows)
}

/// Injection pulsations `2π·{250, 500, 1000}` rad/s.
pub fn default_sweep_pulsations() -> Vec<f64> {
    [250.0, 500.0, 1000.0].iter().map(|f| TAU * f).collect()
}
