//! Texel (template pixel) matching cell and the current-summing array.
//!
//! A texel stores a voltage `v_pk` set by its memristor `r1` and sources a
//! current that peaks when the input equals `v_pk`. The transfer is an
//! asymmetric Gaussian bump with separate half-widths below and above the
//! stored value. An array sums texel currents into a common load, clamped at
//! the supply.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::reference;
use crate::signal::SpikeClass;

/// Affine map between template resistance and stored voltage,
/// `v_pk = slope * r1 + intercept`, valid over `[r_min, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationMap {
    pub slope: f64,
    pub intercept: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl CalibrationMap {
    /// Least-squares line through `(r, v)` pairs.
    pub fn fit(pairs: &[(f64, f64)], r_min: f64, r_max: f64) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidInput("need at least two calibration pairs".into()));
        }
        let n = pairs.len() as f64;
        let mr = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mv = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pairs.iter().map(|p| (p.0 - mr).powi(2)).sum();
        let sxy: f64 = pairs.iter().map(|p| (p.0 - mr) * (p.1 - mv)).sum();
        if sxx == 0.0 {
            return Err(Error::Degenerate("calibration resistances are all equal".into()));
        }
        let slope = sxy / sxx;
        if !(slope > 0.0) {
            return Err(Error::InvalidParams("calibration map must be increasing".into()));
        }
        Ok(Self {
            slope,
            intercept: mv - slope * mr,
            r_min,
            r_max,
        })
    }

    /// Map fitted to the template resistances and stored voltages of the
    /// class-2 array, valid over 5–20 kΩ.
    pub fn reference() -> Self {
        let pairs: Vec<(f64, f64)> = reference::TEMPLATE_R_BEFORE
            .iter()
            .copied()
            .zip(reference::TEMPLATE_V_PK)
            .collect();
        Self::fit(&pairs, 5e3, 20e3).expect("reference pairs are well conditioned")
    }

    pub fn v_pk(&self, r1: f64) -> Result<f64> {
        ensure_finite("r1", r1)?;
        if r1 < self.r_min || r1 > self.r_max {
            return Err(Error::OutOfRange {
                value: r1,
                lo: self.r_min,
                hi: self.r_max,
            });
        }
        Ok(self.slope * r1 + self.intercept)
    }

    pub fn r_from_v_pk(&self, v: f64) -> Result<f64> {
        ensure_finite("v_pk", v)?;
        let (lo, hi) = self.v_range();
        if v < lo || v > hi {
            return Err(Error::OutOfRange { value: v, lo, hi });
        }
        Ok(((v - self.intercept) / self.slope).clamp(self.r_min, self.r_max))
    }

    pub fn v_range(&self) -> (f64, f64) {
        (
            self.slope * self.r_min + self.intercept,
            self.slope * self.r_max + self.intercept,
        )
    }
}

/// Peak current and half-widths of the transfer bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    /// Current at a perfect match (A).
    pub i_peak: f64,
    /// Half-width for inputs below the stored value (V).
    pub w_below: f64,
    /// Half-width for inputs above the stored value (V).
    pub w_above: f64,
}

impl Bump {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_peak > 0.0 && self.w_below > 0.0 && self.w_above > 0.0)
            || !(self.i_peak.is_finite() && self.w_below.is_finite() && self.w_above.is_finite())
        {
            return Err(Error::InvalidParams(
                "i_peak, w_below and w_above must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn current(&self, v_in: f64, v_pk: f64) -> f64 {
        let d = v_in - v_pk;
        let w = if d < 0.0 { self.w_below } else { self.w_above };
        self.i_peak * (-(d / w) * (d / w)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TexelParams {
    pub v_supply: f64,
    pub bump: Bump,
    /// Internal optimum of the output stage. Folded into the bump; kept for
    /// documentation only.
    #[serde(default)]
    pub v_opt: Option<f64>,
    pub calibration: CalibrationMap,
}

/// Bump fitted by [`fit_bump`] to the first-run outputs of the reference
/// class-2 array with a 300 kΩ load.
pub const REFERENCE_BUMP: Bump = Bump {
    i_peak: 8.7432e-7,
    w_below: 2.1791e-2,
    w_above: 1.4655e-2,
};

impl Default for TexelParams {
    fn default() -> Self {
        Self {
            v_supply: reference::TEXEL_SUPPLY_V,
            bump: REFERENCE_BUMP,
            v_opt: None,
            calibration: CalibrationMap::reference(),
        }
    }
}

impl TexelParams {
    pub fn validate(&self) -> Result<()> {
        self.bump.validate()?;
        if !(self.v_supply > 0.0 && self.v_supply.is_finite()) {
            return Err(Error::InvalidParams("v_supply must be positive".into()));
        }
        if !(self.calibration.slope > 0.0) || self.calibration.r_min >= self.calibration.r_max {
            return Err(Error::InvalidParams("invalid calibration map".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Texel {
    /// Template memristor resistance (Ω).
    pub r1: f64,
    /// Per-texel bump override.
    #[serde(default)]
    pub bump: Option<Bump>,
}

impl Texel {
    pub fn new(r1: f64) -> Self {
        Self { r1, bump: None }
    }

    pub fn v_pk(&self, params: &TexelParams) -> Result<f64> {
        params.calibration.v_pk(self.r1)
    }

    pub fn current(&self, v_in: f64, params: &TexelParams) -> Result<f64> {
        ensure_finite("v_in", v_in)?;
        if v_in < 0.0 || v_in > params.v_supply {
            return Err(Error::OutOfRange {
                value: v_in,
                lo: 0.0,
                hi: params.v_supply,
            });
        }
        let bump = self.bump.unwrap_or(params.bump);
        Ok(bump.current(v_in, self.v_pk(params)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TexelArray {
    pub texels: Vec<Texel>,
    pub r_load: f64,
}

impl TexelArray {
    pub fn new(texels: Vec<Texel>, r_load: f64) -> Result<Self> {
        if texels.is_empty() {
            return Err(Error::InvalidInput("array needs at least one texel".into()));
        }
        if !(r_load > 0.0 && r_load.is_finite()) {
            return Err(Error::InvalidParams("r_load must be positive".into()));
        }
        Ok(Self { texels, r_load })
    }

    /// Array of `n` texels at the lower end of the range.
    pub fn blank(n: usize, params: &TexelParams) -> Result<Self> {
        Self::new(
            vec![Texel::new(params.calibration.r_min); n],
            reference::TEXEL_LOAD_OHMS,
        )
    }

    /// `min(v_supply, r_load * sum_i I_i(v_i))`.
    pub fn output(&self, v_inputs: &[f64], params: &TexelParams) -> Result<f64> {
        if v_inputs.len() != self.texels.len() {
            return Err(Error::InvalidInput(format!(
                "{} inputs for {} texels",
                v_inputs.len(),
                self.texels.len()
            )));
        }
        let mut total = 0.0;
        for (t, &v) in self.texels.iter().zip(v_inputs) {
            total += t.current(v, params)?;
        }
        Ok((self.r_load * total).min(params.v_supply))
    }

    /// Sets every `r1` so the stored voltages equal `targets`. All targets are
    /// checked before any texel changes.
    pub fn program(&mut self, targets: &[f64], params: &TexelParams) -> Result<()> {
        if targets.len() != self.texels.len() {
            return Err(Error::InvalidInput(format!(
                "{} targets for {} texels",
                targets.len(),
                self.texels.len()
            )));
        }
        let rs = targets
            .iter()
            .map(|&v| params.calibration.r_from_v_pk(v))
            .collect::<Result<Vec<_>>>()?;
        for (t, r) in self.texels.iter_mut().zip(rs) {
            t.r1 = r;
        }
        Ok(())
    }

    pub fn stored(&self, params: &TexelParams) -> Result<Vec<f64>> {
        self.texels.iter().map(|t| t.v_pk(params)).collect()
    }
}

/// Rounds to the 10 mV grid, halves away from zero. Inputs are snapped to
/// 1 nV first so decimal halves such as 0.735 round up despite their binary
/// representation.
pub fn round_input(v: f64) -> f64 {
    let centi = (v * 100.0 * 1e7).round() / 1e7;
    centi.round() / 100.0
}

pub fn round_inputs(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(round_input).collect()
}

/// Instance variant relative to the class average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    L,
    M,
    H,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::L => "L",
            Variant::M => "M",
            Variant::H => "H",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSampler {
    pub v_trig: f64,
    pub skip: usize,
    pub take: usize,
    /// A later rising crossing more than this many samples after the first
    /// one marks the window as corrupted by a second spike.
    #[serde(default = "default_rejection_gap")]
    pub rejection_gap: usize,
}

fn default_rejection_gap() -> usize {
    20
}

impl TriggerSampler {
    pub fn new(v_trig: f64) -> Self {
        Self {
            v_trig,
            skip: 6,
            take: 4,
            rejection_gap: default_rejection_gap(),
        }
    }

    /// Trigger halfway between the conditioned baseline and the conditioned
    /// class peak.
    pub fn half_peak(baseline: f64, peak: f64) -> Self {
        Self::new(0.5 * (baseline + peak))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWindow {
    pub crossing: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// First sample strictly above `v_trig` starts the count; the next `skip`
/// samples are dropped and the following `take` are returned.
pub fn trigger_sample(instance: &[f64], sampler: &TriggerSampler) -> Result<SampleWindow> {
    let c = instance
        .iter()
        .position(|&v| v > sampler.v_trig)
        .ok_or(Error::NoCrossing(sampler.v_trig))?;
    let first = c + sampler.skip + 1;
    let last = first + sampler.take;
    if last > instance.len() {
        return Err(Error::OutOfBounds {
            index: last - 1,
            reason: format!("instance has {} samples", instance.len()),
        });
    }
    let second = (c + 1..instance.len())
        .find(|&i| instance[i - 1] <= sampler.v_trig && instance[i] > sampler.v_trig && i - c > sampler.rejection_gap);
    if let Some(i) = second {
        return Err(Error::Rejected(format!(
            "second trigger crossing at {i}, {} samples after the first",
            i - c
        )));
    }
    Ok(SampleWindow {
        crossing: c,
        indices: (first..last).collect(),
        values: instance[first..last].to_vec(),
    })
}

/// Conditioned and rounded texel inputs for one spike instance. Rows that
/// share a rounded vector carry every label they stand for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub labels: Vec<(SpikeClass, Variant)>,
    pub indices: Vec<usize>,
    pub v_ideal: Vec<f64>,
    pub v_rounded: Vec<f64>,
}

impl SampleSet {
    pub fn new(class: SpikeClass, variant: Variant, indices: Vec<usize>, v_ideal: Vec<f64>) -> Self {
        let v_rounded = round_inputs(&v_ideal);
        Self {
            labels: vec![(class, variant)],
            indices,
            v_ideal,
            v_rounded,
        }
    }

    pub fn label(&self) -> String {
        self.labels
            .iter()
            .map(|(c, v)| format!("{c}{v}"))
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn has_class(&self, class: SpikeClass) -> bool {
        self.labels.iter().any(|(c, _)| *c == class)
    }
}

/// Folds sets with identical rounded vectors into one multi-label set,
/// keeping the first occurrence's ideal values.
pub fn merge_duplicates(sets: Vec<SampleSet>) -> Vec<SampleSet> {
    let mut out: Vec<SampleSet> = Vec::new();
    for s in sets {
        if let Some(prev) = out.iter_mut().find(|p| p.v_rounded == s.v_rounded) {
            prev.labels.extend(s.labels);
        } else {
            out.push(s);
        }
    }
    out
}

/// Result of fitting the bump to measured array outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpFit {
    pub bump: Bump,
    pub rms: f64,
}

fn fit_rms(
    inputs: &[Vec<f64>],
    outputs: &[f64],
    template: &[f64],
    w_below: f64,
    w_above: f64,
    v_supply: f64,
) -> (f64, f64) {
    let unit = Bump {
        i_peak: 1.0,
        w_below,
        w_above,
    };
    let sums: Vec<f64> = inputs
        .iter()
        .map(|xs| xs.iter().zip(template).map(|(&x, &t)| unit.current(x, t)).sum())
        .collect();
    let ss: f64 = sums.iter().map(|s| s * s).sum();
    let sy: f64 = sums.iter().zip(outputs).map(|(s, y)| s * y).sum();
    let gain = if ss > 0.0 { sy / ss } else { 0.0 };
    let mse = sums
        .iter()
        .zip(outputs)
        .map(|(s, y)| ((gain * s).min(v_supply) - y).powi(2))
        .sum::<f64>()
        / outputs.len() as f64;
    (mse.sqrt(), gain)
}

/// Fits `(i_peak, w_below, w_above)` to measured outputs by least squares.
///
/// The load gain `r_load * i_peak` is solved in closed form for each pair of
/// widths; the widths are searched on a log grid that is refined around the
/// best cell.
pub fn fit_bump(
    inputs: &[Vec<f64>],
    outputs: &[f64],
    template: &[f64],
    r_load: f64,
    v_supply: f64,
) -> Result<BumpFit> {
    if inputs.len() != outputs.len() || inputs.is_empty() {
        return Err(Error::InvalidInput("need one output per input vector".into()));
    }
    if inputs.iter().any(|x| x.len() != template.len()) {
        return Err(Error::InvalidInput("input vectors must match the template length".into()));
    }
    let (mut lo, mut hi) = ((1e-4f64).ln(), (0.5f64).ln());
    let n = 120;
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for _ in 0..5 {
        let step = (hi - lo) / n as f64;
        for i in 0..=n {
            for j in 0..=n {
                let wb = (lo + step * i as f64).exp();
                let wa = (lo + step * j as f64).exp();
                let (rms, gain) = fit_rms(inputs, outputs, template, wb, wa, v_supply);
                if rms < best.0 {
                    best = (rms, wb, wa, gain);
                }
            }
        }
        let centre_b = best.1.ln();
        let centre_a = best.2.ln();
        let half = 4.0 * step;
        lo = centre_b.min(centre_a) - half;
        hi = centre_b.max(centre_a) + half;
    }
    let (rms, w_below, w_above, gain) = best;
    let bump = Bump {
        i_peak: gain / r_load,
        w_below,
        w_above,
    };
    bump.validate()?;
    Ok(BumpFit { bump, rms })
}

/// Charge of one texel evaluation expressed in inverter toggles.
pub fn charge_ratio(q_texel: f64, q_inverter: f64) -> Result<f64> {
    ensure_finite("q_texel", q_texel)?;
    ensure_finite("q_inverter", q_inverter)?;
    if q_inverter <= 0.0 {
        return Err(Error::InvalidInput("inverter charge must be > 0".into()));
    }
    if q_texel < 0.0 {
        return Err(Error::InvalidInput("texel charge must be >= 0".into()));
    }
    Ok(q_texel / q_inverter)
}
