//! TOML scenario files.
//!
//! ```toml
//! name = "custom"
//!
//! [motor]
//! Ld = 7.9e-3        # H
//! Lq = 8.2e-3        # H
//! lambda = 0.155     # Wb
//! R = 2.1            # Ω
//! n = 5              # pole pairs
//! J = 3e-3           # kg·m², optional
//! In = 5.19          # A, rated current; needed for normalized saturation
//!
//! [saturation]       # optional; omitted means unsaturated
//! normalized = true  # entries are α30·Ld²·In, α12·Ld·Lq·In, α40·Ld³·In², α22·Ld·Lq²·In², α04·Lq³·In²
//! a30 = 0.0551
//! a12 = 0.0545
//! a40 = 0.0170
//! a22 = 0.0249
//! a04 = 0.0067
//!
//! [injection]
//! u_tilde = [15.0, 0.0]      # V, γ–δ
//! frequency_hz = 500.0
//! waveform = "square_wave"   # or "sinusoid"
//!
//! [profiles]                 # breakpoints, linearly interpolated
//! omega_c = [[0.0, 0.0], [4.0, 31.4]]         # [t, rad/s]
//! u_rd = [[0.0, 0.0, 2.1], [4.0, 0.0, 2.1]]   # [t, V_γ, V_δ]
//! tau_l = [[0.0, 0.0], [4.0, 0.0]]            # [t, N·m]
//!
//! [estimator]
//! saturation = true          # false: same model with every α set to zero
//! grid_size = 720
//! tolerance = 1e-5
//! continuity_window = 1.5707963
//! resistive_correction = true  # account for R acting on the ripple
//! every = 8                  # estimate every k-th sample
//!
//! [run]
//! t_end = 4.0
//! dt = 3.125e-5              # optional, defaults to a 1/64 injection period
//! noise_std = 0.0
//! seed = 0
//! ```

use std::f64::consts::TAU;
use std::path::Path;

use serde::Deserialize;

use crate::dynamics::{DriveProfiles, InjectionSpec, MotorParams, MotorStateGd, Profile, Waveform};
use crate::estimator::EstimatorConfig;
use crate::magnetics::{MagModel, NormalizedSaturation, SaturationCoeffs};
use crate::simulate::ScenarioConfig;
use crate::{Error, Result, Vec2};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    name: Option<String>,
    motor: Option<RawMotor>,
    saturation: Option<RawSaturation>,
    injection: Option<RawInjection>,
    profiles: Option<RawProfiles>,
    estimator: Option<RawEstimator>,
    run: Option<RawRun>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawMotor {
    Ld: Option<f64>,
    Lq: Option<f64>,
    lambda: Option<f64>,
    R: Option<f64>,
    n: Option<u32>,
    J: Option<f64>,
    In: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSaturation {
    #[serde(default)]
    normalized: bool,
    a30: Option<f64>,
    a12: Option<f64>,
    a40: Option<f64>,
    a22: Option<f64>,
    a04: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInjection {
    u_tilde: Option<[f64; 2]>,
    frequency_hz: Option<f64>,
    #[serde(default)]
    waveform: Waveform,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfiles {
    omega_c: Option<Vec<[f64; 2]>>,
    u_rd: Option<Vec<[f64; 3]>>,
    tau_l: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    saturation: Option<bool>,
    grid_size: Option<usize>,
    tolerance: Option<f64>,
    continuity_window: Option<f64>,
    resistive_correction: Option<bool>,
    every: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    t_end: Option<f64>,
    dt: Option<f64>,
    noise_std: Option<f64>,
    seed: Option<u64>,
}

/// A validated scenario file.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub estimator: EstimatorConfig,
    /// Estimate every `every`-th sample.
    pub every: usize,
    pub rated_current: Option<f64>,
}

fn required<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::validation(field, "missing required field"))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if cfg.name.is_empty() {
        cfg.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<LoadedConfig> {
    let raw: RawFile = toml::from_str(text).map_err(|e| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;

    let m = required(raw.motor, "motor")?;
    let (ld, lq) = (required(m.Ld, "Ld")?, required(m.Lq, "Lq")?);
    let lambda = required(m.lambda, "lambda")?;
    let r = required(m.R, "R")?;
    let n = required(m.n, "n")?;
    let j = m.J.unwrap_or(MotorParams::DEFAULT_INERTIA);
    if let Some(i) = m.In {
        if !(i.is_finite() && i > 0.0) {
            return Err(Error::validation("In", "must be finite and > 0"));
        }
    }

    let sat = match raw.saturation {
        None => SaturationCoeffs::default(),
        Some(s) => {
            let a30 = s.a30.unwrap_or(0.0);
            let a12 = s.a12.unwrap_or(0.0);
            let a40 = s.a40.unwrap_or(0.0);
            let a22 = s.a22.unwrap_or(0.0);
            let a04 = s.a04.unwrap_or(0.0);
            if s.normalized {
                let i_n = required(m.In, "In")?;
                NormalizedSaturation { a30, a12, a40, a22, a04 }.denormalize(ld, lq, i_n)
            } else {
                SaturationCoeffs { a30, a12, a40, a22, a04 }
            }
        }
    };
    let params = MotorParams::new(MagModel::new(ld, lq, lambda, sat)?, r, n, j)?;

    let inj = required(raw.injection, "injection")?;
    let u = required(inj.u_tilde, "u_tilde")?;
    let f = required(inj.frequency_hz, "frequency_hz")?;
    let inj = InjectionSpec::new(Vec2::new(u[0], u[1]), TAU * f, inj.waveform)?;

    let run = required(raw.run, "run")?;
    let t_end = required(run.t_end, "t_end")?;

    let profiles = match raw.profiles {
        None => DriveProfiles::zero(t_end),
        Some(p) => DriveProfiles {
            omega_c: scalar_profile(p.omega_c, "omega_c", t_end)?,
            u_rd: match p.u_rd {
                None => Profile::constant(Vec2::zeros(), 0.0, t_end),
                Some(pts) => Profile::new(pts.iter().map(|q| (q[0], Vec2::new(q[1], q[2]))).collect())
                    .map_err(|e| rename(e, "u_rd"))?,
            },
            tau_l: scalar_profile(p.tau_l, "tau_l", t_end)?,
        },
    };

    let scenario = ScenarioConfig {
        params,
        profiles,
        inj,
        t_end,
        dt: run.dt.unwrap_or_else(|| ScenarioConfig::default_dt(&inj)),
        initial: MotorStateGd::default(),
        noise_std: run.noise_std.unwrap_or(0.0),
        seed: run.seed.unwrap_or(0),
    };
    scenario.validate()?;

    let est = raw.estimator;
    let use_sat = est.as_ref().and_then(|e| e.saturation).unwrap_or(true);
    let mut estimator = EstimatorConfig::new(if use_sat {
        params.mag
    } else {
        params.mag.without_saturation()
    });
    if est.as_ref().and_then(|e| e.resistive_correction).unwrap_or(true) {
        estimator.resistance = Some(params.r);
    }
    let mut every = 1;
    if let Some(e) = est {
        if let Some(g) = e.grid_size {
            estimator.grid_size = g;
        }
        if let Some(t) = e.tolerance {
            estimator.tolerance = t;
        }
        if let Some(w) = e.continuity_window {
            estimator.continuity_window = w;
        }
        if let Some(k) = e.every {
            every = k;
        }
    }
    estimator.validate()?;
    if every == 0 {
        return Err(Error::validation("every", "must be >= 1"));
    }

    Ok(LoadedConfig {
        name: raw.name.unwrap_or_default(),
        scenario,
        estimator,
        every,
        rated_current: m.In,
    })
}

fn rename(e: Error, field: &str) -> Error {
    match e {
        Error::Validation { reason, .. } => Error::validation(field, reason),
        other => other,
    }
}

fn scalar_profile(pts: Option<Vec<[f64; 2]>>, field: &str, t_end: f64) -> Result<Profile<f64>> {
    match pts {
        None => Ok(Profile::constant(0.0, 0.0, t_end)),
        Some(pts) => Profile::new(pts.iter().map(|q| (q[0], q[1])).collect()).map_err(|e| rename(e, field)),
    }
}
