//! Behavioral model of a bilayer metal-oxide memristor used as a thresholded
//! integrator.
//!
//! Inputs inside the dead zone `(v_th_neg, v_th_pos)` leave the resistive state
//! untouched. Supra-threshold inputs move the state with a power law in the
//! overdrive, scaled by a saturation window that is 1 at the baseline and falls
//! to 0 at the bound the state is moving towards. Negative bias raises the
//! resistance, positive bias lowers it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Switching-kinetics and variability parameters of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    /// Lower bound of the operating range (Ω).
    pub r_min: f64,
    /// Upper bound of the operating range (Ω).
    pub r_max: f64,
    /// Negative switching threshold (V).
    pub v_th_neg: f64,
    /// Positive switching threshold (V).
    pub v_th_pos: f64,
    /// Rate of resistance increase under negative bias, (Ω/s)·V^-alpha.
    pub k_neg: f64,
    /// Rate of resistance decrease under positive bias, (Ω/s)·V^-alpha.
    pub k_pos: f64,
    /// Exponent applied to the overdrive beyond threshold.
    pub alpha: f64,
    /// Std of the log-domain multiplicative noise on each increment.
    pub sigma_cycle: f64,
    /// Relative std of read noise.
    pub sigma_read: f64,
    /// Resistance that reset pulses restore (Ω).
    pub r_baseline: f64,
    /// Accepted relative distance from the baseline after a reset.
    #[serde(default = "default_reset_tolerance")]
    pub reset_tolerance: f64,
    /// Integration step used when applying a reset pulse (s).
    #[serde(default = "default_reset_step")]
    pub reset_step: f64,
}

fn default_reset_tolerance() -> f64 {
    0.02
}

fn default_reset_step() -> f64 {
    0.5e-6
}

/// `k_neg` obtained by calibrating the noiseless device against a class-I
/// fractional change of 4.776493e-2 starting from 12232.41 Ω, driven by the
/// noiseless default class-I prototype through the sorter front end.
pub const CALIBRATED_K_NEG: f64 = 2.123560531e6;

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            r_min: 5_000.0,
            r_max: 20_000.0,
            v_th_neg: -1.2,
            v_th_pos: 1.2,
            k_neg: CALIBRATED_K_NEG,
            k_pos: 1.5e8,
            alpha: 1.0,
            sigma_cycle: 0.0,
            sigma_read: 0.0,
            r_baseline: 12_000.0,
            reset_tolerance: default_reset_tolerance(),
            reset_step: default_reset_step(),
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("r_min", self.r_min),
            ("r_max", self.r_max),
            ("v_th_neg", self.v_th_neg),
            ("v_th_pos", self.v_th_pos),
            ("k_neg", self.k_neg),
            ("k_pos", self.k_pos),
            ("alpha", self.alpha),
            ("sigma_cycle", self.sigma_cycle),
            ("sigma_read", self.sigma_read),
            ("r_baseline", self.r_baseline),
            ("reset_tolerance", self.reset_tolerance),
            ("reset_step", self.reset_step),
        ];
        for (name, v) in all {
            if !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} is not finite")));
            }
        }
        if !(0.0 < self.r_min && self.r_min < self.r_baseline && self.r_baseline < self.r_max) {
            return Err(Error::InvalidParams(
                "require 0 < r_min < r_baseline < r_max".into(),
            ));
        }
        if !(self.v_th_neg < 0.0 && self.v_th_pos > 0.0) {
            return Err(Error::InvalidParams("require v_th_neg < 0 < v_th_pos".into()));
        }
        if self.k_neg < 0.0 || self.k_pos < 0.0 || self.alpha < 0.0 {
            return Err(Error::InvalidParams("k_neg, k_pos, alpha must be >= 0".into()));
        }
        if self.sigma_cycle < 0.0 || self.sigma_read < 0.0 {
            return Err(Error::InvalidParams("noise std must be >= 0".into()));
        }
        if self.reset_tolerance < 0.0 || self.reset_step <= 0.0 {
            return Err(Error::InvalidParams(
                "reset_tolerance must be >= 0 and reset_step > 0".into(),
            ));
        }
        Ok(())
    }

    /// Soft saturation window for a move in the direction of `increasing`.
    pub fn window(&self, r: f64, increasing: bool) -> f64 {
        if increasing {
            ((self.r_max - r) / (self.r_max - self.r_baseline)).max(0.0)
        } else {
            ((r - self.r_min) / (self.r_baseline - self.r_min)).max(0.0)
        }
    }
}

/// A rectangular voltage pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub amplitude: f64,
    pub duration: f64,
}

impl Pulse {
    pub fn new(amplitude: f64, duration: f64) -> Result<Self> {
        ensure_finite("pulse amplitude", amplitude)?;
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "pulse duration must be > 0 (got {duration})"
            )));
        }
        Ok(Self {
            amplitude,
            duration,
        })
    }
}

impl Default for Pulse {
    /// +2 V for 100 µs.
    fn default() -> Self {
        Self {
            amplitude: 2.0,
            duration: 100e-6,
        }
    }
}

/// Resistive state of one device plus its private random stream.
#[derive(Debug, Clone)]
pub struct DeviceState {
    r: f64,
    rng: ChaCha8Rng,
}

impl DeviceState {
    pub fn new(r: f64, seed: u64, params: &DeviceParams) -> Result<Self> {
        ensure_finite("initial resistance", r)?;
        if r < params.r_min || r > params.r_max {
            return Err(Error::OutOfRange {
                value: r,
                lo: params.r_min,
                hi: params.r_max,
            });
        }
        Ok(Self {
            r,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn at_baseline(seed: u64, params: &DeviceParams) -> Self {
        Self {
            r: params.r_baseline,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// True resistance, without read noise.
    pub fn resistance(&self) -> f64 {
        self.r
    }

    /// Drives the device with voltage `v` for `dt` seconds and returns the
    /// resulting change in resistance.
    ///
    /// The window ODE is integrated exactly over the step, so the state can
    /// never cross a bound regardless of step size.
    pub fn apply_sample(&mut self, v: f64, dt: f64, params: &DeviceParams) -> Result<f64> {
        ensure_finite("voltage", v)?;
        ensure_finite("dt", dt)?;
        if dt <= 0.0 {
            return Err(Error::InvalidInput(format!("dt must be > 0 (got {dt})")));
        }
        let (overdrive, k, increasing) = if v <= params.v_th_neg {
            (v.abs() - params.v_th_neg.abs(), params.k_neg, true)
        } else if v >= params.v_th_pos {
            (v - params.v_th_pos, params.k_pos, false)
        } else {
            return Ok(0.0);
        };
        let mut rate = k * overdrive.powf(params.alpha);
        if params.sigma_cycle > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            rate *= (params.sigma_cycle * z).exp();
        }
        let before = self.r;
        self.r = if increasing {
            let span = params.r_max - params.r_baseline;
            params.r_max - (params.r_max - self.r) * (-rate * dt / span).exp()
        } else {
            let span = params.r_baseline - params.r_min;
            params.r_min + (self.r - params.r_min) * (-rate * dt / span).exp()
        };
        self.r = self.r.clamp(params.r_min, params.r_max);
        Ok(self.r - before)
    }

    /// Reads the resistive state. Reads do not disturb `r`; only the random
    /// stream advances when read noise is enabled.
    pub fn read(&mut self, params: &DeviceParams) -> f64 {
        if params.sigma_read > 0.0 {
            let eta: f64 = StandardNormal.sample(&mut self.rng);
            self.r * (1.0 + params.sigma_read * eta)
        } else {
            self.r
        }
    }

    /// Applies a reset pulse as a train of short steps. The drive switches off
    /// the moment the state reaches the baseline, so a strong enough pulse
    /// lands on it exactly. Sub-threshold pulses are a no-op.
    pub fn reset_pulse(&mut self, pulse: Pulse, params: &DeviceParams) -> Result<()> {
        ensure_finite("pulse amplitude", pulse.amplitude)?;
        if pulse.amplitude < params.v_th_pos {
            return Ok(());
        }
        let steps = (pulse.duration / params.reset_step).ceil().max(1.0) as usize;
        let dt = pulse.duration / steps as f64;
        for _ in 0..steps {
            if self.r <= params.r_baseline {
                break;
            }
            self.apply_sample(pulse.amplitude, dt, params)?;
            if self.r < params.r_baseline {
                self.r = params.r_baseline;
                break;
            }
        }
        Ok(())
    }

    /// Feeds a whole voltage sequence with a fixed sample period.
    pub fn apply_waveform(&mut self, samples: &[f64], dt: f64, params: &DeviceParams) -> Result<()> {
        for &v in samples {
            self.apply_sample(v, dt, params)?;
        }
        Ok(())
    }
}

/// Fractional change `(r_end - r_start) / r_start` produced by feeding
/// `samples` to a noiseless device that starts at `r_start`.
pub fn noiseless_response(
    samples: &[f64],
    dt: f64,
    r_start: f64,
    params: &DeviceParams,
) -> Result<f64> {
    let mut p = params.clone();
    p.sigma_cycle = 0.0;
    p.sigma_read = 0.0;
    let mut dev = DeviceState::new(r_start, 0, &p)?;
    dev.apply_waveform(samples, dt, &p)?;
    Ok((dev.resistance() - r_start) / r_start)
}

/// Finds `k_neg` by bisection so that the noiseless response to `samples`
/// from `r_start` equals `target_frac`.
pub fn calibrate_k_neg(
    samples: &[f64],
    dt: f64,
    r_start: f64,
    target_frac: f64,
    params: &DeviceParams,
) -> Result<f64> {
    if !(target_frac > 0.0) {
        return Err(Error::InvalidInput("target fractional change must be > 0".into()));
    }
    let response = |k: f64| {
        let mut p = params.clone();
        p.k_neg = k;
        noiseless_response(samples, dt, r_start, &p)
    };
    let ceiling = (params.r_max - r_start) / r_start;
    if target_frac >= ceiling {
        return Err(Error::Infeasible(format!(
            "target {target_frac} not reachable below r_max (ceiling {ceiling})"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while response(hi)? < target_frac {
        lo = hi;
        hi *= 2.0;
        if hi > 1e30 {
            return Err(Error::Infeasible(
                "waveform never crosses the negative threshold".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if response(mid)? < target_frac {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
