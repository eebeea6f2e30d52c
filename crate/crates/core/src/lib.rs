//! Saturated permanent-magnet synchronous motor model with high-frequency
//! voltage injection, sliding-window current demodulation and rotor position
//! estimation from currents alone.
//!
//! The crate is organised bottom-up:
//!
//! * [`magnetics`] – energy function, flux/current maps, inductance and
//!   saliency matrices.
//! * [`dynamics`] – dq and γ–δ state equations, injection waveforms and the
//!   controller interface.
//! * [`simulate`] – fixed-step RK4 closed-loop integration and the averaging
//!   check.
//! * [`demod`] – one-period sliding-window demodulation.
//! * [`estimator`] – nonlinear least-squares angle recovery.
//! * [`observability`] – permanent trajectories and first-order observability.
//! * [`scenario`] – configuration files, preset experiments and CSV output.

pub mod demod;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod magnetics;
pub mod observability;
pub mod scenario;
pub mod simulate;

pub use error::{Error, Result};

/// Two-vector used for every frame (dq, γ–δ, αβ).
pub type Vec2 = nalgebra::Vector2<f64>;
/// Real 2×2 matrix.
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Wrap an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }
}
