//! Rotor angle recovery by nonlinear least squares on the ripple envelope.
//!
//! For an injection `ũ·f(Ωt)` the current ripple is `S(μ, ī)·ũ/Ω·F(Ωt)`, so
//! `μ = θ − θc` is the minimizer of `‖ĩ − S(μ, ī)ũ/Ω‖²`. The objective is
//! periodic and may be bimodal, so it is scanned on a uniform grid and the
//! best local minima are polished by golden-section search.
//!
//! Optionally the model accounts for the stator resistance acting on the
//! ripple itself: the exact periodic solution of `φ̃' = ũf − R·S·φ̃`,
//! demodulated against `F`, is `S·g(R·S/Ω)·ũ/Ω` for a scalar gain `g` set
//! by the waveform harmonics. That removes the leading `(R/(LΩ))²` bias of
//! the first-order envelope.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::demod::{DemodConfig, SlidingDemodulator};
use crate::dynamics::{InjectionSpec, Waveform};
use crate::magnetics::MagModel;
use crate::Mat2;
use crate::simulate::{SampleEstimate, Trajectory};
use crate::{wrap_angle, Error, Result, Vec2};

/// Grid minima that get refined; more than two only matters for odd
/// saturation shapes.
const MAX_REFINED: usize = 8;
/// Runner-up within this fraction of the best residual counts as a tie.
const AMBIGUITY_RATIO: f64 = 0.1;
/// Residuals closer than this fraction of `‖ĩ‖²` are indistinguishable
/// given a ~1% envelope model accuracy.
const AMBIGUITY_FLOOR: f64 = 1e-4;

/// Where to look when two minima tie and there is no previous estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    /// Prefer the minimum nearest the controller angle (`μ` nearest 0).
    ControllerAngle,
    /// Prefer the minimum nearest this absolute electrical angle.
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub mag: MagModel,
    pub grid_size: usize,
    pub tolerance: f64,
    pub continuity_window: f64,
    pub initial_guess: InitialGuess,
    /// Stator resistance for the resistive ripple correction; `None` uses
    /// the first-order envelope `S·ũ/Ω`.
    pub resistance: Option<f64>,
}

impl EstimatorConfig {
    pub fn new(mag: MagModel) -> Self {
        Self {
            mag,
            grid_size: 720,
            tolerance: 1e-5,
            continuity_window: FRAC_PI_2,
            initial_guess: InitialGuess::ControllerAngle,
            resistance: None,
        }
    }

    pub fn with_resistance(mut self, r: f64) -> Self {
        self.resistance = Some(r);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.mag.validate()?;
        if self.grid_size < 90 {
            return Err(Error::validation("grid_size", "must be >= 90"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::validation("tolerance", "must be finite and > 0"));
        }
        if !(self.continuity_window.is_finite() && self.continuity_window > 0.0) {
            return Err(Error::validation("continuity_window", "must be finite and > 0"));
        }
        if let Some(r) = self.resistance {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::validation("resistance", "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Demodulated measurements and the injection they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorInput {
    pub i_bar: Vec2,
    pub i_tilde: Vec2,
    pub u_tilde: Vec2,
    pub omega_inj: f64,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    /// `θc + μ*`, rad.
    pub theta_hat: f64,
    /// `μ*` in (−π, π].
    pub mu: f64,
    pub residual: f64,
    /// Best other local minimum as `(μ, residual)`.
    pub runner_up: Option<(f64, f64)>,
    pub ambiguous: bool,
}

/// `‖ĩ − S(μ, ī)·ũ/Ω‖²`.
pub fn residual(
    mu: f64,
    i_tilde: Vec2,
    i_bar: Vec2,
    u_tilde: Vec2,
    omega_inj: f64,
    mag: &MagModel,
) -> Result<f64> {
    let s = mag.saliency_matrix(mu, i_bar)?;
    Ok((i_tilde - s * u_tilde / omega_inj).norm_squared())
}

/// Demodulated gain of a first-order lag `a = R·λ/Ω` on the ripple:
/// `Σ|c_k|²/(k² + a²) / Σ|c_k|²/k²` over the harmonics `c_k` of `f`.
pub fn ripple_gain(waveform: Waveform, a: f64) -> f64 {
    let a2 = a * a;
    match waveform {
        Waveform::Sinusoid => 1.0 / (1.0 + a2),
        Waveform::SquareWave => {
            if a.abs() < 1e-2 {
                1.0 - PI * PI / 10.0 * a2 + 17.0 * PI.powi(4) / 1680.0 * a2 * a2
            } else {
                96.0 / (PI.powi(4) * a2) * (PI * PI / 8.0 - PI * (0.5 * PI * a).tanh() / (4.0 * a))
            }
        }
    }
}

/// Envelope predicted for saliency `s`, with the resistive correction when
/// `resistance` is given.
pub fn predicted_envelope(s: &Mat2, input: &EstimatorInput, resistance: Option<f64>) -> Vec2 {
    let first_order = s * input.u_tilde / input.omega_inj;
    let Some(r) = resistance.filter(|&r| r > 0.0) else {
        return first_order;
    };
    let e = nalgebra::SymmetricEigen::new(*s);
    let eps = r / input.omega_inj;
    let g = e.eigenvalues.map(|l| ripple_gain(input.waveform, eps * l));
    let v = e.eigenvectors;
    v * Mat2::from_diagonal(&g) * v.transpose() * first_order
}

/// Minimize `f` over `[a, b]` to an interval width of `tol`.
fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Circular distance between two angles.
fn angle_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Grid scan plus golden-section refinement; `θ̂ = θc + μ*`.
pub fn estimate(
    input: &EstimatorInput,
    theta_c: f64,
    prev: Option<f64>,
    cfg: &EstimatorConfig,
) -> Result<PositionEstimate> {
    if input.u_tilde.norm() == 0.0 {
        return Err(Error::NoInjection);
    }
    let cost = |mu: f64| -> Result<f64> {
        let s = cfg.mag.saliency_matrix(mu, input.i_bar)?;
        Ok((input.i_tilde - predicted_envelope(&s, input, cfg.resistance)).norm_squared())
    };

    let n = cfg.grid_size;
    let step = TAU / n as f64;
    let grid: Vec<f64> = (0..n).map(|k| -PI + (k + 1) as f64 * step).collect();
    let values = grid.iter().map(|&mu| cost(mu)).collect::<Result<Vec<_>>>()?;
    let (r_min, r_max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    let mut local: Vec<usize> = (0..n)
        .filter(|&k| {
            let (l, r) = (values[(k + n - 1) % n], values[(k + 1) % n]);
            values[k] <= l && values[k] < r
        })
        .collect();
    if local.is_empty() {
        // flat objective: nothing to discriminate, keep every grid point
        local = (0..n).collect();
    }
    local.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let flat = r_max - r_min <= 1e-12 * r_max.max(f64::MIN_POSITIVE);
    let mut minima: Vec<(f64, f64)> = if flat {
        local.iter().map(|&k| (grid[k], values[k])).collect()
    } else {
        local
            .iter()
            .take(MAX_REFINED)
            .map(|&k| {
                let centre = grid[k];
                let (mu, r) = golden_section(cost, centre - step, centre + step, cfg.tolerance)?;
                Ok((wrap_angle(mu), r))
            })
            .collect::<Result<_>>()?
    };
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));

    let best = minima[0].1;
    let tie = AMBIGUITY_RATIO * best + AMBIGUITY_FLOOR * input.i_tilde.norm_squared();
    let tied: Vec<(f64, f64)> = minima.iter().copied().filter(|m| m.1 - best <= tie).collect();
    let ambiguous = tied.len() > 1;

    let chosen = if ambiguous {
        let nearest = |target: f64| {
            *tied
                .iter()
                .min_by(|a, b| {
                    angle_distance(theta_c + a.0, target).total_cmp(&angle_distance(theta_c + b.0, target))
                })
                .expect("non-empty")
        };
        match prev {
            Some(p) => {
                let m = nearest(p);
                if angle_distance(theta_c + m.0, p) <= cfg.continuity_window {
                    m
                } else {
                    minima[0]
                }
            }
            None => match cfg.initial_guess {
                InitialGuess::ControllerAngle => nearest(theta_c),
                InitialGuess::Absolute(a) => nearest(a),
            },
        }
    } else {
        minima[0]
    };

    let runner_up = minima
        .iter()
        .copied()
        .filter(|m| m.0 != chosen.0)
        .min_by(|a, b| a.1.total_cmp(&b.1));

    Ok(PositionEstimate {
        theta_hat: theta_c + chosen.0,
        mu: chosen.0,
        residual: chosen.1,
        runner_up,
        ambiguous,
    })
}

/// Demodulate the recorded currents and attach an estimate every `every`
/// samples once the demodulator is warm (and, with trend removal, once it
/// has a trend: two periods). Returns the number of estimates.
///
/// `θ̂` at sample k is `θc(t_k) + μ*`; `μ` moves slowly, so this compensates
/// the half-period lag of the window.
pub fn estimate_trajectory(
    traj: &mut Trajectory,
    inj: &InjectionSpec,
    cfg: &EstimatorConfig,
    demod: &DemodOptions,
    every: usize,
) -> Result<usize> {
    cfg.validate()?;
    if !inj.is_active() {
        return Err(Error::NoInjection);
    }
    if every == 0 {
        return Err(Error::validation("every", "must be >= 1"));
    }
    let dt = traj
        .dt()
        .ok_or(Error::SeriesTooShort { len: traj.len(), window: 2 })?;
    let mut dcfg = DemodConfig::new(inj.omega_inj, dt, inj.waveform)?;
    dcfg.detrend = demod.detrend;
    if traj.len() < dcfg.window + 1 {
        return Err(Error::SeriesTooShort {
            len: traj.len(),
            window: dcfg.window + 1,
        });
    }

    let mut dm = SlidingDemodulator::new(dcfg);
    let mut prev = None;
    let mut count = 0;
    traj.estimates = vec![None; traj.len()];
    for k in 0..traj.len() {
        let Some(d) = dm.push(traj.t[k], traj.i_gd[k]) else {
            continue;
        };
        if (k - dcfg.window) % every != 0 || !dm.trend_ready() {
            continue;
        }
        let s = traj.states[k];
        let input = EstimatorInput {
            i_bar: d.i_bar,
            i_tilde: d.i_tilde,
            u_tilde: inj.u_tilde,
            omega_inj: inj.omega_inj,
            waveform: inj.waveform,
        };
        let est = estimate(&input, s.theta_c, prev, cfg)?;
        prev = Some(est.theta_hat);
        traj.estimates[k] = Some(SampleEstimate {
            i_bar: d.i_bar,
            i_tilde: d.i_tilde,
            theta_hat: est.theta_hat,
            error: wrap_angle(est.theta_hat - s.theta),
        });
        count += 1;
    }
    Ok(count)
}

/// Demodulator options used by [`estimate_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodOptions {
    /// Remove a locally linear trend in `ī` from the correlation (on by
    /// default).
    pub detrend: bool,
}

impl Default for DemodOptions {
    fn default() -> Self {
        Self { detrend: true }
    }
}
