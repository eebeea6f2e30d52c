//! Built-in experiments at desk scale: 4 s runs with the speed and torque
//! envelopes of the bench tests and the bench injection (15 V, 500 Hz).

use std::time::Instant;

use crate::dynamics::{DriveProfiles, InjectionSpec, MotorParams, MotorStateGd, Profile, Ratings, VfController};
use crate::estimator::EstimatorConfig;
use crate::magnetics::CurrentDq;
use crate::observability::{current_for_torque, linearize, observability_rank, permanent_trajectory};
use crate::simulate::{default_sweep_pulsations, verify_averaging, ScenarioConfig};
use crate::{Error, Result, Vec2};

use super::{run_estimation, ObservabilityRow, RunOptions, RunReport};

pub const PRESETS: [&str; 4] = ["long_test", "speed_reversal", "averaging_sweep", "observability_sweep"];

pub const DURATION: f64 = 4.0;
/// Estimate every 8th sample (every 1/8 injection period).
pub const ESTIMATE_EVERY: usize = 8;
pub const FULL_LOAD: f64 = 1.5;
/// Resistive-drop compensation ramps in over this time from standstill, s.
const SOFT_START: f64 = 0.05;

/// Shape of the desk experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetTuning {
    /// Resistive-drop compensation `u_rd = R·(i_m, gain·i_q(τ) + floor)`.
    pub magnetizing: f64,
    pub drop_gain: f64,
    pub drop_floor: f64,
    /// Duration of each load change, s.
    pub ramp: f64,
}

impl Default for PresetTuning {
    fn default() -> Self {
        Self {
            magnetizing: 2.5,
            drop_gain: 1.0,
            drop_floor: 0.3,
            ramp: 0.3,
        }
    }
}

/// Resistive-drop compensation for load torque `tau`.
fn drop_voltage(tau: f64, p: &MotorParams, tune: &PresetTuning) -> Result<Vec2> {
    let iq = current_for_torque(tau, p)?;
    Ok(p.r * Vec2::new(tune.magnetizing, tune.drop_gain * iq + tune.drop_floor))
}

/// Standstill with the injection ripple already periodic, so no decaying
/// flux offset pollutes the first windows.
fn on_injection_orbit(inj: &InjectionSpec) -> MotorStateGd {
    MotorStateGd {
        phi_gd: inj.u_tilde * inj.waveform.primitive(0.0) / inj.omega_inj,
        ..MotorStateGd::default()
    }
}

fn build(speed: Vec<(f64, f64)>, torque: Vec<(f64, f64)>, tune: &PresetTuning) -> Result<ScenarioConfig> {
    let p = MotorParams::reference();
    let inj = InjectionSpec::reference();
    let mut u_rd = torque
        .iter()
        .map(|&(t, tau)| Ok((t, drop_voltage(tau, &p, tune)?)))
        .collect::<Result<Vec<_>>>()?;
    // soft start: the first torque breakpoint must lie past SOFT_START
    debug_assert!(torque.len() > 1 && torque[1].0 > SOFT_START && torque[1].1 == torque[0].1);
    u_rd.insert(1, (SOFT_START, u_rd[0].1));
    u_rd[0].1 = Vec2::zeros();
    let cfg = ScenarioConfig {
        params: p,
        profiles: DriveProfiles {
            omega_c: Profile::new(speed)?,
            u_rd: Profile::new(u_rd)?,
            tau_l: Profile::new(torque)?,
        },
        inj,
        t_end: DURATION,
        dt: ScenarioConfig::default_dt(&inj),
        initial: on_injection_orbit(&inj),
        noise_std: 0.0,
        seed: 0,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn rated() -> (f64, f64) {
    let r = Ratings::reference();
    (r.electrical_speed(MotorParams::reference().n), r.torque)
}

/// Slow speed changes within ±2% of rated; load 0 → 150% → 75% → 150% → 0.
pub fn long_test_config() -> Result<ScenarioConfig> {
    long_test_config_with(&PresetTuning::default())
}

pub fn long_test_config_with(tune: &PresetTuning) -> Result<ScenarioConfig> {
    let r = tune.ramp;
    let (w, tau) = rated();
    let speed = vec![
        (0.0, 0.0),
        (0.3, 0.02 * w),
        (1.4, 0.02 * w),
        (2.4, -0.02 * w),
        (3.4, -0.02 * w),
        (DURATION, 0.0),
    ];
    let torque = vec![
        (0.0, 0.0),
        (0.4, 0.0),
        (0.4 + r, FULL_LOAD * tau),
        (1.2, FULL_LOAD * tau),
        (1.2 + r, 0.75 * tau),
        (2.0, 0.75 * tau),
        (2.0 + r, FULL_LOAD * tau),
        (3.2, FULL_LOAD * tau),
        (3.2 + r, 0.0),
        (DURATION, 0.0),
    ];
    build(speed, torque, tune)
}

/// Speed ramped from −0.2% to +0.2% of rated at 150% load.
pub fn speed_reversal_config() -> Result<ScenarioConfig> {
    speed_reversal_config_with(&PresetTuning::default())
}

pub fn speed_reversal_config_with(tune: &PresetTuning) -> Result<ScenarioConfig> {
    let (w, tau) = rated();
    // from standstill to −0.2% first, so the back-EMF feed-forward does not step
    let speed = vec![
        (0.0, 0.0),
        (0.1, -0.002 * w),
        (1.0, -0.002 * w),
        (3.5, 0.002 * w),
        (DURATION, 0.002 * w),
    ];
    let torque = vec![(0.0, 0.0), (0.2, 0.0), (0.2 + tune.ramp, FULL_LOAD * tau), (DURATION, FULL_LOAD * tau)];
    build(speed, torque, tune)
}

/// Rank of the linearization over a speed × torque grid.
pub fn observability_sweep() -> Result<Vec<ObservabilityRow>> {
    let p = MotorParams::reference();
    let (w, tau) = rated();
    let speeds = [-0.5 * w, 0.0, 1e-3 * w, 0.01 * w, w];
    let torques = [0.0, 0.25 * tau, 0.5 * tau, tau, FULL_LOAD * tau];
    let mut rows = Vec::with_capacity(25);
    for &t in &torques {
        let iq = current_for_torque(t, &p)?;
        for &om in &speeds {
            let traj = permanent_trajectory(om, CurrentDq::new(0.0, iq), &p)?;
            let (rank, kernel) = observability_rank(&linearize(&traj, &p));
            rows.push(ObservabilityRow {
                omega_bar: om,
                torque: t,
                i_q: iq,
                rank,
                kernel: (kernel.len() == 1).then(|| {
                    let mut k = [0.0; 5];
                    k.copy_from_slice(kernel[0].as_slice());
                    k
                }),
            });
        }
    }
    Ok(rows)
}

pub fn run_preset(name: &str, opts: &RunOptions) -> Result<RunReport> {
    let (_, tau) = rated();
    match name {
        "long_test" | "speed_reversal" => {
            let base = if name == "long_test" {
                long_test_config()?
            } else {
                speed_reversal_config()?
            };
            let cfg = opts.apply(&base);
            cfg.validate()?;
            let est = EstimatorConfig::new(cfg.params.mag).with_resistance(cfg.params.r);
            Ok(run_estimation(name, &cfg, &est, ESTIMATE_EVERY, Some(FULL_LOAD * tau), opts)?.report)
        }
        "averaging_sweep" => {
            let started = Instant::now();
            let cfg = opts.apply(&long_test_config()?);
            let ctrl = VfController::new(cfg.profiles.clone(), &cfg.params.mag);
            let omegas = match opts.injection_hz {
                Some(f) => [1.0, 2.0, 4.0].iter().map(|k| k * std::f64::consts::TAU * f).collect(),
                None => default_sweep_pulsations(),
            };
            let rows = verify_averaging(&cfg, &ctrl, &omegas)?;
            let mut report = RunReport {
                name: name.into(),
                averaging: rows,
                ..RunReport::default()
            };
            if let Some(dir) = &opts.out_dir {
                std::fs::create_dir_all(dir)?;
                let mut text = String::from("omega_inj,e_mech,e_theta,e_omega,e_flux,e_flux_raw\n");
                for r in &report.averaging {
                    text += &format!(
                        "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
                        r.omega_inj, r.e_mech, r.e_theta, r.e_omega, r.e_flux, r.e_flux_raw
                    );
                }
                std::fs::write(dir.join("averaging.csv"), text)?;
                report.files.push("averaging.csv".into());
            }
            report.runtime_s = started.elapsed().as_secs_f64();
            Ok(report)
        }
        "observability_sweep" => {
            let started = Instant::now();
            let mut report = RunReport {
                name: name.into(),
                observability: observability_sweep()?,
                ..RunReport::default()
            };
            if let Some(dir) = &opts.out_dir {
                std::fs::create_dir_all(dir)?;
                let mut text = String::from("omega_bar,torque,i_q,rank,k_phi_d,k_phi_q,k_omega,k_theta,k_tau\n");
                for r in &report.observability {
                    let k = r.kernel.unwrap_or([f64::NAN; 5]);
                    text += &format!(
                        "{:.8e},{:.8e},{:.8e},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
                        r.omega_bar, r.torque, r.i_q, r.rank, k[0], k[1], k[2], k[3], k[4]
                    );
                }
                std::fs::write(dir.join("observability.csv"), text)?;
                report.files.push("observability.csv".into());
            }
            report.runtime_s = started.elapsed().as_secs_f64();
            Ok(report)
        }
        other => Err(Error::validation(
            "preset",
            format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
        )),
    }
}
