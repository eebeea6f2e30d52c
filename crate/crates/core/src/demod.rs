//! One-period sliding-window demodulation of the measured currents into the
//! slow component `ī` and the ripple envelope `ĩ` along `F(Ωt)`.
//!
//! Both use trapezoidal quadrature over the trailing window `[t − T, t]`,
//! i.e. `N + 1` samples with half weights at the two ends.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use crate::dynamics::Waveform;
use crate::{Error, Result, Vec2};

pub const MIN_WINDOW: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodConfig {
    pub omega_inj: f64,
    pub dt: f64,
    /// Samples per injection period, `N`.
    pub window: usize,
    pub waveform: Waveform,
    /// Remove the contribution of a linear trend in `ī` from `∫x·F`, so a
    /// slowly ramping `ī` does not leak into `ĩ`. The slope is taken from
    /// one-period means one period apart, which periodic ripple of any
    /// shape cannot bias; it is zero until two means exist. On by default;
    /// off gives the plain ratio `∫x·F / ∫F²`.
    pub detrend: bool,
}

impl DemodConfig {
    /// Checks that `dt` divides the injection period into at least
    /// [`MIN_WINDOW`] steps, to one part in 10⁶.
    pub fn new(omega_inj: f64, dt: f64, waveform: Waveform) -> Result<Self> {
        if !(omega_inj > 0.0 && dt > 0.0) {
            return Err(Error::validation("demod", "pulsation and step must be > 0"));
        }
        let period = TAU / omega_inj;
        let window = (period / dt).round() as usize;
        if window < MIN_WINDOW {
            return Err(Error::validation(
                "demod",
                format!("window of {window} samples is below {MIN_WINDOW}"),
            ));
        }
        if ((window as f64 * dt - period) / period).abs() > 1e-6 {
            return Err(Error::validation(
                "demod",
                "sample period does not divide the injection period",
            ));
        }
        Ok(Self {
            omega_inj,
            dt,
            window,
            waveform,
            detrend: true,
        })
    }

    /// Plain correlation without trend removal.
    pub fn plain(self) -> Self {
        Self {
            detrend: false,
            ..self
        }
    }

    fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.window {
            0.5
        } else {
            1.0
        }
    }
}

/// Streaming demodulator over the trailing window.
#[derive(Debug, Clone)]
pub struct SlidingDemodulator {
    cfg: DemodConfig,
    buf: VecDeque<(f64, Vec2)>,
    /// Recent `(window centre, ī)` pairs, up to one period back.
    means: VecDeque<(f64, Vec2)>,
}

/// Output of one demodulation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demodulated {
    pub i_bar: Vec2,
    pub i_tilde: Vec2,
}

impl SlidingDemodulator {
    pub fn new(cfg: DemodConfig) -> Self {
        Self {
            cfg,
            buf: VecDeque::with_capacity(cfg.window + 1),
            means: VecDeque::with_capacity(cfg.window + 1),
        }
    }

    pub fn config(&self) -> &DemodConfig {
        &self.cfg
    }

    /// True once a full period has been seen.
    pub fn is_warm(&self) -> bool {
        self.buf.len() == self.cfg.window + 1
    }

    /// True once a trend estimate exists (two periods seen), or always when
    /// trend removal is off.
    pub fn trend_ready(&self) -> bool {
        !self.cfg.detrend || self.means.len() == self.cfg.window + 1
    }

    /// Push one sample; returns `None` during warm-up.
    pub fn push(&mut self, t: f64, i: Vec2) -> Option<Demodulated> {
        if self.buf.len() == self.cfg.window + 1 {
            self.buf.pop_front();
        }
        self.buf.push_back((t, i));
        if !self.is_warm() {
            return None;
        }
        let n = self.cfg.window;
        let centre = 0.5 * (self.buf[0].0 + self.buf[n].0);
        let f_at = |ts: f64| self.cfg.waveform.primitive(self.cfg.omega_inj * ts);

        let (mut sum, mut corr, mut energy) = (Vec2::zeros(), Vec2::zeros(), 0.0);
        let (mut f_sum, mut f_ramp) = (0.0, 0.0);
        for (j, &(ts, x)) in self.buf.iter().enumerate() {
            let w = self.cfg.weight(j);
            let f = f_at(ts);
            sum += w * x;
            corr += (w * f) * x;
            energy += w * f * f;
            f_sum += w * f;
            f_ramp += w * (ts - centre) * f;
        }
        let i_bar = sum / n as f64;

        if self.means.len() == n + 1 {
            self.means.pop_front();
        }
        self.means.push_back((centre, i_bar));
        if self.cfg.detrend {
            // x ≈ ī + b·(s − centre) + ĩ·F over the window
            corr -= f_sum * i_bar;
            energy -= f_sum * f_sum / n as f64;
            if self.means.len() == n + 1 {
                let (t0, m0) = self.means[0];
                corr -= f_ramp * (i_bar - m0) / (centre - t0);
            }
        }
        Some(Demodulated {
            i_bar,
            i_tilde: corr / energy,
        })
    }
}

fn run_batch(t: &[f64], i: &[Vec2], cfg: &DemodConfig) -> Result<Vec<Option<Demodulated>>> {
    if t.len() != i.len() {
        return Err(Error::validation("demod", "time and sample series differ in length"));
    }
    if i.len() < cfg.window + 1 {
        return Err(Error::SeriesTooShort {
            len: i.len(),
            window: cfg.window + 1,
        });
    }
    let mut d = SlidingDemodulator::new(*cfg);
    Ok(t.iter().zip(i).map(|(&ts, &x)| d.push(ts, x)).collect())
}

/// Trailing one-period mean; `None` for the warm-up samples.
pub fn sliding_mean(t: &[f64], i: &[Vec2], cfg: &DemodConfig) -> Result<Vec<Option<Vec2>>> {
    Ok(run_batch(t, i, cfg)?
        .into_iter()
        .map(|d| d.map(|d| d.i_bar))
        .collect())
}

/// Trailing one-period correlation with `F(Ωs)`, normalized by the
/// quadrature of `F²` over the same window.
pub fn sliding_correlate(t: &[f64], i: &[Vec2], cfg: &DemodConfig) -> Result<Vec<Option<Vec2>>> {
    Ok(run_batch(t, i, cfg)?
        .into_iter()
        .map(|d| d.map(|d| d.i_tilde))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> DemodConfig {
        let omega = TAU * 500.0;
        DemodConfig::new(omega, TAU / omega / 64.0, Waveform::SquareWave).unwrap()
    }

    fn times(cfg: &DemodConfig, n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 * cfg.dt).collect()
    }

    #[test]
    fn window_validation() {
        let omega = TAU * 500.0;
        assert_eq!(cfg().window, 64);
        assert!(DemodConfig::new(omega, TAU / omega / 8.0, Waveform::SquareWave).is_err());
        assert!(DemodConfig::new(omega, TAU / omega / 64.5, Waveform::SquareWave).is_err());
    }

    #[test]
    fn too_short() {
        let c = cfg();
        let t = times(&c, 10);
        let i = vec![Vec2::zeros(); 10];
        assert!(matches!(
            sliding_mean(&t, &i, &c),
            Err(Error::SeriesTooShort { len: 10, .. })
        ));
    }

    #[test]
    fn constant_input() {
        let c = cfg();
        let n = 300;
        let t = times(&c, n);
        let x = Vec2::new(2.5, -1.0);
        let i = vec![x; n];
        let m = sliding_mean(&t, &i, &c).unwrap();
        let r = sliding_correlate(&t, &i, &c).unwrap();
        assert!(m[..c.window].iter().all(Option::is_none));
        for k in c.window..n {
            assert!((m[k].unwrap() - x).norm() < 1e-12);
            assert!(r[k].unwrap().norm() < 1e-3 * x.norm());
        }
    }

    #[test]
    fn mean_rejects_ripple_and_correlation_recovers_it() {
        let c = cfg();
        let n = 400;
        let t = times(&c, n);
        let (cst, amp) = (Vec2::new(1.0, 3.0), Vec2::new(0.6, -0.2));
        let i: Vec<Vec2> = t
            .iter()
            .map(|&s| cst + amp * c.waveform.primitive(c.omega_inj * s))
            .collect();
        let m = sliding_mean(&t, &i, &c).unwrap();
        let r = sliding_correlate(&t, &i, &c).unwrap();
        for k in c.window..n {
            assert!((m[k].unwrap() - cst).norm() <= 1e-3 * amp.norm());
            assert!((r[k].unwrap() - amp).norm() <= 1e-3 * amp.norm());
        }
    }

    #[test]
    fn ramp_has_half_window_lag() {
        let c = cfg();
        let n = 200;
        let t = times(&c, n);
        let rate = 40.0;
        let i: Vec<Vec2> = t.iter().map(|&s| Vec2::new(rate * s, -rate * s)).collect();
        let m = sliding_mean(&t, &i, &c).unwrap();
        let half = 0.5 * c.window as f64 * c.dt;
        for k in c.window..n {
            let want = rate * (t[k] - half);
            assert!((m[k].unwrap().x - want).abs() < 1e-12);
        }
    }

    fn band_limited_errors(c: &DemodConfig) -> (f64, f64) {
        let band = c.omega_inj / 50.0;
        let n = 20 * 64 * 10;
        let t = times(&c, n);
        let bar = |s: f64| Vec2::new(3.0 + (band * s).sin(), -2.0 + 0.5 * (band * s + 1.0).cos());
        let tilde = |s: f64| Vec2::new(0.6 + 0.1 * (band * s).cos(), 0.05 * (band * s).sin());
        let i: Vec<Vec2> = t
            .iter()
            .map(|&s| bar(s) + tilde(s) * c.waveform.primitive(c.omega_inj * s))
            .collect();
        let m = sliding_mean(&t, &i, c).unwrap();
        let r = sliding_correlate(&t, &i, c).unwrap();
        let lag = 0.5 * c.window as f64 * c.dt;
        // the trend estimate needs two one-period means
        let (mut e_bar, mut e_til, mut s_bar, mut s_til): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for k in 2 * c.window..n {
            let tc = t[k] - lag;
            e_bar = e_bar.max((m[k].unwrap() - bar(tc)).norm());
            e_til = e_til.max((r[k].unwrap() - tilde(tc)).norm());
            s_bar = s_bar.max(bar(tc).norm());
            s_til = s_til.max(tilde(tc).norm());
        }
        (e_bar / s_bar, e_til / s_til)
    }

    #[test]
    fn band_limited_envelopes_recovered() {
        let (e_bar, e_til) = band_limited_errors(&cfg());
        assert!(e_bar < 0.01, "{e_bar}");
        assert!(e_til < 0.01, "{e_til}");
    }

    #[test]
    fn plain_correlation_leaks_a_ramping_mean() {
        // a drifting ī aliases into ĩ at the rate ~ (dī/dt)/Ω unless detrended
        let (_, plain) = band_limited_errors(&cfg().plain());
        let (_, detrended) = band_limited_errors(&cfg());
        assert!(plain > 0.01, "{plain}");
        assert!(detrended < 0.2 * plain);
    }

    #[test]
    fn periodic_ripple_orthogonal_to_f_does_not_leak() {
        // a second harmonic is orthogonal to F over a period, but not to a
        // ramp over an arbitrary window
        let c = cfg();
        let n = 6 * c.window;
        let t = times(&c, n);
        let (a, d) = (Vec2::new(0.5, 0.1), Vec2::new(0.3, -0.2));
        let i: Vec<Vec2> = t
            .iter()
            .map(|&s| Vec2::new(2.0, -1.0) + a * c.waveform.primitive(c.omega_inj * s) + d * (2.0 * c.omega_inj * s + 0.3).sin())
            .collect();
        let r = sliding_correlate(&t, &i, &c).unwrap();
        let plain = sliding_correlate(&t, &i, &c.plain()).unwrap();
        for k in 2 * c.window..n {
            assert!((r[k].unwrap() - plain[k].unwrap()).norm() < 1e-9);
            assert!((r[k].unwrap() - a).norm() < 1e-6 * a.norm());
        }
    }

    proptest! {
        #[test]
        fn demodulation_is_linear(
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let c = cfg();
            let n = 160;
            let t = times(&c, n);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.gen(), rng.gen())).collect();
            let y: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.gen(), rng.gen())).collect();
            let z: Vec<Vec2> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (mx, my, mz) = (
                sliding_mean(&t, &x, &c).unwrap(),
                sliding_mean(&t, &y, &c).unwrap(),
                sliding_mean(&t, &z, &c).unwrap(),
            );
            let (rx, ry, rz) = (
                sliding_correlate(&t, &x, &c).unwrap(),
                sliding_correlate(&t, &y, &c).unwrap(),
                sliding_correlate(&t, &z, &c).unwrap(),
            );
            for k in c.window..n {
                let lin_m = a * mx[k].unwrap() + b * my[k].unwrap();
                let lin_r = a * rx[k].unwrap() + b * ry[k].unwrap();
                prop_assert!((mz[k].unwrap() - lin_m).norm() < 1e-12);
                prop_assert!((rz[k].unwrap() - lin_r).norm() < 1e-12);
            }
        }
    }
}
