//! Scenario files, preset experiments, reports and CSV telemetry.

pub mod config;
pub mod csv;
pub mod presets;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::dynamics::VfController;
use crate::estimator::{estimate_trajectory, DemodOptions, EstimatorConfig};
use crate::observability::Vec5;
use crate::simulate::{run_closed_loop, AveragingRow, ScenarioConfig, Trajectory};
use crate::{Error, Result};

pub use config::{load_config, parse_config, LoadedConfig};
pub use presets::{run_preset, PRESETS};

/// Position error statistics over estimated samples, electrical degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub max_deg: f64,
    pub mean_deg: f64,
    /// Maximum over samples at full (150%) load, when the scenario has any.
    pub max_full_load_deg: Option<f64>,
    pub samples: usize,
}

impl ErrorStats {
    /// `mask(k)` selects the full-load samples.
    pub fn from_trajectory(traj: &Trajectory, mask: impl Fn(usize) -> bool) -> Option<Self> {
        let (mut max, mut sum, mut n) = (0.0f64, 0.0, 0usize);
        let mut full: Option<f64> = None;
        for (k, e) in traj.estimates.iter().enumerate() {
            let Some(e) = e else { continue };
            let d = e.error.abs().to_degrees();
            max = max.max(d);
            sum += d;
            n += 1;
            if mask(k) {
                full = Some(full.map_or(d, |m| m.max(d)));
            }
        }
        (n > 0).then(|| Self {
            max_deg: max,
            mean_deg: sum / n as f64,
            max_full_load_deg: full,
            samples: n,
        })
    }
}

/// One point of the observability sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservabilityRow {
    pub omega_bar: f64,
    pub torque: f64,
    pub i_q: f64,
    pub rank: usize,
    /// Unobservable direction `(δφd, δφq, δω, δθ, δτL)` when rank is 4.
    pub kernel: Option<[f64; 5]>,
}

impl ObservabilityRow {
    pub fn kernel_vec(&self) -> Option<Vec5> {
        self.kernel.map(|k| Vec5::from_column_slice(&k))
    }
}

/// Summary of one preset or scenario-file run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunReport {
    pub name: String,
    /// Estimator with the plant's saturation model.
    pub with_model: Option<ErrorStats>,
    /// Estimator with every saturation coefficient set to zero.
    pub without_model: Option<ErrorStats>,
    pub averaging: Vec<AveragingRow>,
    pub observability: Vec<ObservabilityRow>,
    pub runtime_s: f64,
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
}

/// Overrides applied on top of a preset or file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Injection frequency override, Hz.
    pub injection_hz: Option<f64>,
    /// Only run the estimator without the saturation model.
    pub no_saturation_estimator: bool,
}

impl RunOptions {
    pub(crate) fn apply(&self, cfg: &ScenarioConfig) -> ScenarioConfig {
        let mut c = match self.injection_hz {
            Some(f) => cfg.with_pulsation(std::f64::consts::TAU * f),
            None => cfg.clone(),
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}

/// Everything a closed-loop estimation run produces.
#[derive(Debug, Clone)]
pub struct EstimationRun {
    pub report: RunReport,
    pub with_model: Option<Trajectory>,
    pub without_model: Option<Trajectory>,
}

/// Simulate `cfg` under the V/f law and estimate the angle with the given
/// saturated estimator and its unsaturated counterpart, in parallel.
///
/// `full_load` is the torque above which a sample counts as full load.
pub fn run_estimation(
    name: &str,
    cfg: &ScenarioConfig,
    estimator: &EstimatorConfig,
    every: usize,
    full_load: Option<f64>,
    opts: &RunOptions,
) -> Result<EstimationRun> {
    let started = Instant::now();
    let ctrl = VfController::new(cfg.profiles.clone(), &cfg.params.mag);
    let traj = run_closed_loop(cfg, &ctrl)?;

    let nosat = EstimatorConfig {
        mag: estimator.mag.without_saturation(),
        ..estimator.clone()
    };
    let demod = DemodOptions::default();
    let run = |est: &EstimatorConfig| -> Result<Trajectory> {
        let mut t = traj.clone();
        estimate_trajectory(&mut t, &cfg.inj, est, &demod, every)?;
        Ok(t)
    };
    let (with, without) = std::thread::scope(|s| {
        let a = (!opts.no_saturation_estimator).then(|| s.spawn(|| run(estimator)));
        let b = s.spawn(|| run(&nosat));
        (
            a.map(|h| h.join().expect("estimator worker panicked")),
            b.join().expect("estimator worker panicked"),
        )
    });
    let with = with.transpose()?;
    let without = without?;

    let threshold = full_load.map(|f| 0.999 * f);
    let mask = |t: &Trajectory, k: usize| match threshold {
        Some(th) => cfg.profiles.tau_l.eval(t.t[k]).map(|x| x >= th).unwrap_or(false),
        None => false,
    };
    let report = RunReport {
        name: name.to_string(),
        with_model: with
            .as_ref()
            .and_then(|t| ErrorStats::from_trajectory(t, |k| mask(t, k))),
        without_model: ErrorStats::from_trajectory(&without, |k| mask(&without, k)),
        runtime_s: started.elapsed().as_secs_f64(),
        ..RunReport::default()
    };

    let mut out = EstimationRun {
        report,
        with_model: with,
        without_model: Some(without),
    };
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
        if let Some(t) = &out.with_model {
            let f = format!("{name}.csv");
            csv::emit_csv(t, &dir.join(&f))?;
            out.report.files.push(f);
        }
        if let Some(t) = &out.without_model {
            let f = format!("{name}_no_saturation.csv");
            csv::emit_csv(t, &dir.join(&f))?;
            out.report.files.push(f);
        }
        csv::emit_manifest(&dir.join("columns.toml"))?;
        out.report.files.push("columns.toml".into());
    }
    Ok(out)
}

/// Write `report` as `<name>_summary.toml` into `dir`.
pub fn write_summary(report: &RunReport, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}_summary.toml", report.name));
    let text = toml::to_string_pretty(report).map_err(|e| Error::validation("summary", e.to_string()))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Run a preset by name or a scenario file by path. Files go to
/// `opts.out_dir` when set.
pub fn run(target: &str, opts: &RunOptions) -> Result<RunReport> {
    let mut report = if PRESETS.contains(&target) {
        run_preset(target, opts)?
    } else {
        let loaded = load_config(Path::new(target))?;
        let cfg = opts.apply(&loaded.scenario);
        cfg.validate()?;
        run_estimation(&loaded.name, &cfg, &loaded.estimator, loaded.every, None, opts)?.report
    };
    if let Some(dir) = &opts.out_dir {
        let p = write_summary(&report, dir)?;
        report.files.push(p.file_name().unwrap().to_string_lossy().into_owned());
    }
    Ok(report)
}
