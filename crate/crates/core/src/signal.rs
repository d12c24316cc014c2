//! Neural waveforms: conditioning, spike windows, prototype averaging, triplet
//! stream assembly and a synthetic recording generator with ground truth.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::device::Pulse;
use crate::error::{ensure_finite, Error, Result};

/// Samples kept before the registration timestamp of a spike.
pub const PRE_SAMPLES: usize = 19;
/// Samples kept after the registration timestamp of a spike.
pub const POST_SAMPLES: usize = 80;
/// Length of a spike window: `PRE_SAMPLES + 1 + POST_SAMPLES`.
pub const WINDOW_LEN: usize = PRE_SAMPLES + 1 + POST_SAMPLES;
/// Default sample period (24 kHz).
pub const DEFAULT_DT: f64 = 1.0 / 24_000.0;

/// Single-unit class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SpikeClass {
    One = 1,
    Two = 2,
    Three = 3,
}

impl SpikeClass {
    pub const ALL: [SpikeClass; 3] = [SpikeClass::One, SpikeClass::Two, SpikeClass::Three];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn roman(self) -> &'static str {
        match self {
            SpikeClass::One => "I",
            SpikeClass::Two => "II",
            SpikeClass::Three => "III",
        }
    }
}

impl TryFrom<u8> for SpikeClass {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(SpikeClass::One),
            2 => Ok(SpikeClass::Two),
            3 => Ok(SpikeClass::Three),
            _ => Err(Error::InvalidInput(format!("class id must be 1, 2 or 3 (got {v})"))),
        }
    }
}

impl From<SpikeClass> for u8 {
    fn from(c: SpikeClass) -> u8 {
        c.id()
    }
}

impl fmt::Display for SpikeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Uniformly sampled voltage trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub dt: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be > 0 (got {dt})")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, dt })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Affine gain/offset stage applied before the device or the texel array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conditioner {
    pub gain: f64,
    pub offset: f64,
}

impl Conditioner {
    /// Front end used for the memristive sorter.
    pub const SORTER: Conditioner = Conditioner {
        gain: -1.3,
        offset: -0.63,
    };
    /// Front end used for the texel array.
    pub const TEXEL: Conditioner = Conditioner {
        gain: 0.1,
        offset: 0.66,
    };

    pub fn new(gain: f64, offset: f64) -> Result<Self> {
        let c = Self { gain, offset };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("gain", self.gain)?;
        ensure_finite("offset", self.offset)?;
        if self.gain == 0.0 {
            return Err(Error::InvalidParams("gain must be non-zero".into()));
        }
        Ok(())
    }

    pub fn apply(&self, v: f64) -> f64 {
        self.gain * v + self.offset
    }

    pub fn condition(&self, w: &Waveform) -> Waveform {
        Waveform {
            samples: self.condition_slice(&w.samples),
            dt: w.dt,
        }
    }

    pub fn condition_slice(&self, samples: &[f64]) -> Vec<f64> {
        samples.iter().map(|&v| self.apply(v)).collect()
    }
}

/// A 100-sample class waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikePrototype {
    pub class: SpikeClass,
    pub samples: Vec<f64>,
}

impl SpikePrototype {
    pub fn new(class: SpikeClass, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != WINDOW_LEN {
            return Err(Error::InvalidInput(format!(
                "prototype must have {WINDOW_LEN} samples (got {})",
                samples.len()
            )));
        }
        Ok(Self { class, samples })
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One occurrence of a spike cut out of a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeInstance {
    pub class: SpikeClass,
    /// Registration timestamp in the source recording, if any.
    pub timestamp: Option<usize>,
    pub samples: Vec<f64>,
}

impl SpikeInstance {
    pub fn from_prototype(p: &SpikePrototype) -> Self {
        Self {
            class: p.class,
            timestamp: None,
            samples: p.samples.clone(),
        }
    }

    /// Adds `stray` shifted right by `offset` samples, truncated to this window.
    pub fn with_stray(&self, stray: &[f64], offset: usize) -> Self {
        let mut samples = self.samples.clone();
        for (dst, src) in samples.iter_mut().skip(offset).zip(stray) {
            *dst += src;
        }
        Self {
            class: self.class,
            timestamp: self.timestamp,
            samples,
        }
    }
}

/// Shape of a synthetic single-unit waveform: a raised-cosine positive lobe
/// with independent rise and fall lengths followed by a raised-cosine trough.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeShape {
    /// Positive peak (V).
    pub peak: f64,
    /// Trough magnitude (V, positive number).
    pub trough: f64,
    /// Window index of the positive peak.
    pub peak_index: usize,
    pub rise: usize,
    pub fall: usize,
    pub trough_len: usize,
}

impl SpikeShape {
    /// Default class shapes. Peak and trough values match the averaged
    /// prototypes of the reference dataset (1.042/-0.33, 0.968/-0.52,
    /// 0.850/-0.30 V); lobe widths are chosen so the supra-threshold area
    /// after sorter conditioning falls off with class as in the measured
    /// resistive responses.
    pub fn default_for(class: SpikeClass) -> Self {
        match class {
            SpikeClass::One => Self {
                peak: 1.042,
                trough: 0.33,
                peak_index: 22,
                rise: 6,
                fall: 20,
                trough_len: 30,
            },
            SpikeClass::Two => Self {
                peak: 0.968,
                trough: 0.52,
                peak_index: 22,
                rise: 4,
                fall: 14,
                trough_len: 30,
            },
            SpikeClass::Three => Self {
                peak: 0.850,
                trough: 0.30,
                peak_index: 22,
                rise: 2,
                fall: 6,
                trough_len: 30,
            },
        }
    }

    pub fn render(&self, class: SpikeClass) -> Result<SpikePrototype> {
        if self.rise == 0 || self.fall == 0 || self.trough_len < 2 {
            return Err(Error::InvalidParams("lobe lengths must be positive".into()));
        }
        if self.peak_index < self.rise || self.peak_index + self.fall + self.trough_len > WINDOW_LEN {
            return Err(Error::InvalidParams("spike shape does not fit the window".into()));
        }
        let mut v = vec![0.0; WINDOW_LEN];
        let start = self.peak_index - self.rise;
        for (i, s) in v.iter_mut().enumerate() {
            if (start..=self.peak_index).contains(&i) {
                let x = (i - start) as f64 / self.rise as f64;
                *s = self.peak * 0.5 * (1.0 - (std::f64::consts::PI * x).cos());
            } else if i > self.peak_index && i <= self.peak_index + self.fall {
                let x = (i - self.peak_index) as f64 / self.fall as f64;
                *s = self.peak * 0.5 * (1.0 + (std::f64::consts::PI * x).cos());
            }
        }
        let trough_start = self.peak_index + self.fall;
        for (j, s) in v.iter_mut().skip(trough_start).take(self.trough_len).enumerate() {
            let x = j as f64 / self.trough_len as f64;
            *s -= self.trough * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * x).cos());
        }
        SpikePrototype::new(class, v)
    }
}

/// The three default class prototypes.
pub fn default_prototypes() -> Vec<SpikePrototype> {
    SpikeClass::ALL
        .iter()
        .map(|&c| SpikeShape::default_for(c).render(c).expect("default shapes fit"))
        .collect()
}

/// Pointwise mean of same-class, equal-length instances.
pub fn average_prototype(instances: &[SpikeInstance]) -> Result<SpikePrototype> {
    let first = instances
        .first()
        .ok_or_else(|| Error::InvalidInput("no instances to average".into()))?;
    let n = first.samples.len();
    let mut acc = vec![0.0; n];
    for inst in instances {
        if inst.class != first.class {
            return Err(Error::InvalidInput("instances of mixed classes".into()));
        }
        if inst.samples.len() != n {
            return Err(Error::InvalidInput("instances of different lengths".into()));
        }
        for (a, s) in acc.iter_mut().zip(&inst.samples) {
            *a += s;
        }
    }
    let k = instances.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    SpikePrototype::new(first.class, acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub index: usize,
    pub class: SpikeClass,
}

/// Voltage recording with ground-truth spike registrations.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub samples: Vec<f64>,
    pub dt: f64,
    pub ground_truth: Vec<GroundTruth>,
}

impl Recording {
    pub fn new(samples: Vec<f64>, dt: f64, ground_truth: Vec<GroundTruth>) -> Result<Self> {
        let rec = Self {
            samples,
            dt,
            ground_truth,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        Waveform::new(Vec::new(), self.dt)?;
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("sample {i} is not finite")));
        }
        for w in self.ground_truth.windows(2) {
            if w[1].index <= w[0].index {
                return Err(Error::InvalidInput(
                    "ground-truth timestamps must be strictly increasing".into(),
                ));
            }
        }
        if let Some(gt) = self.ground_truth.iter().find(|g| g.index >= self.samples.len()) {
            return Err(Error::OutOfBounds {
                index: gt.index,
                reason: format!("recording has {} samples", self.samples.len()),
            });
        }
        Ok(())
    }
}

/// Cuts a `pre + 1 + post` window around every ground-truth timestamp.
pub fn extract_instances(rec: &Recording, pre: usize, post: usize) -> Result<Vec<SpikeInstance>> {
    rec.ground_truth
        .iter()
        .map(|gt| {
            if gt.index < pre || gt.index + post >= rec.samples.len() {
                return Err(Error::OutOfBounds {
                    index: gt.index,
                    reason: format!(
                        "need {pre} samples before and {post} after in a recording of {}",
                        rec.samples.len()
                    ),
                });
            }
            Ok(SpikeInstance {
                class: gt.class,
                timestamp: Some(gt.index),
                samples: rec.samples[gt.index - pre..=gt.index + post].to_vec(),
            })
        })
        .collect()
}

/// Where the spikes of a triplet come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceSource {
    Averaged,
    RandomInstance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletSpec {
    pub order: [SpikeClass; 3],
    pub source: InstanceSource,
    pub reset: Pulse,
}

impl TripletSpec {
    pub fn new(order: [SpikeClass; 3], source: InstanceSource, reset: Pulse) -> Result<Self> {
        let mut sorted = order;
        sorted.sort();
        if sorted != SpikeClass::ALL {
            return Err(Error::InvalidInput(
                "triplet order must contain each class exactly once".into(),
            ));
        }
        Ok(Self {
            order,
            source,
            reset,
        })
    }

    /// Triplet with a uniformly random class order.
    pub fn shuffled<R: Rng + ?Sized>(source: InstanceSource, reset: Pulse, rng: &mut R) -> Self {
        let mut order = SpikeClass::ALL;
        order.shuffle(rng);
        Self {
            order,
            source,
            reset,
        }
    }
}

/// Spike material available to the stream builder.
#[derive(Debug, Clone, Default)]
pub struct InstancePools {
    pub averaged: BTreeMap<SpikeClass, SpikePrototype>,
    pub instances: BTreeMap<SpikeClass, Vec<SpikeInstance>>,
    /// Spike-free stretches drawn for background segments.
    pub background: Vec<Vec<f64>>,
    /// Length of the background segment that opens every triplet; 0 disables it.
    pub background_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type", content = "class")]
pub enum SegmentKind {
    Background,
    Spike(SpikeClass),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub kind: SegmentKind,
    pub triplet: usize,
}

impl Segment {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Reset applied between input samples; `position` is the number of samples
/// fed before the reset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetMarker {
    pub position: usize,
    pub pulse: Pulse,
}

/// Waveform plus the segment and reset annotations needed by the sorter.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedStream {
    pub waveform: Waveform,
    pub segments: Vec<Segment>,
    pub resets: Vec<ResetMarker>,
}

impl AnnotatedStream {
    pub fn conditioned(&self, c: &Conditioner) -> Self {
        Self {
            waveform: c.condition(&self.waveform),
            segments: self.segments.clone(),
            resets: self.resets.clone(),
        }
    }

    pub fn spike_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Spike(_)))
    }
}

/// Concatenates triplets, each optionally opened by a background stretch and
/// closed by a reset marker.
pub fn build_triplet_stream<R: Rng + ?Sized>(
    specs: &[TripletSpec],
    pools: &InstancePools,
    dt: f64,
    rng: &mut R,
) -> Result<AnnotatedStream> {
    if specs.is_empty() {
        return Err(Error::InvalidInput("no triplet specs".into()));
    }
    let mut samples = Vec::new();
    let mut segments = Vec::new();
    let mut resets = Vec::new();
    for (t, spec) in specs.iter().enumerate() {
        if pools.background_len > 0 {
            let bg = match spec.source {
                InstanceSource::RandomInstance if !pools.background.is_empty() => {
                    let src = pools.background.choose(rng).expect("non-empty");
                    let mut v: Vec<f64> = src.iter().copied().take(pools.background_len).collect();
                    v.resize(pools.background_len, 0.0);
                    v
                }
                _ => vec![0.0; pools.background_len],
            };
            segments.push(Segment {
                start: samples.len(),
                len: bg.len(),
                kind: SegmentKind::Background,
                triplet: t,
            });
            samples.extend(bg);
        }
        for &class in &spec.order {
            let spike: &[f64] = match spec.source {
                InstanceSource::Averaged => &pools
                    .averaged
                    .get(&class)
                    .ok_or_else(|| Error::InvalidInput(format!("no averaged prototype for class {class}")))?
                    .samples,
                InstanceSource::RandomInstance => &pools
                    .instances
                    .get(&class)
                    .and_then(|v| v.choose(rng))
                    .ok_or_else(|| Error::InvalidInput(format!("no instances for class {class}")))?
                    .samples,
            };
            segments.push(Segment {
                start: samples.len(),
                len: spike.len(),
                kind: SegmentKind::Spike(class),
                triplet: t,
            });
            samples.extend_from_slice(spike);
        }
        resets.push(ResetMarker {
            position: samples.len(),
            pulse: spec.reset,
        });
    }
    Ok(AnnotatedStream {
        waveform: Waveform::new(samples, dt)?,
        segments,
        resets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub n_spikes_per_class: usize,
    /// Std of white background noise (V).
    pub noise_sigma: f64,
    /// Minimum spacing between consecutive timestamps (samples, >= 100).
    pub min_gap: usize,
    /// Total recording length (samples).
    pub len: usize,
    pub dt: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            n_spikes_per_class: 10,
            noise_sigma: 0.05 * 0.850,
            min_gap: 200,
            len: 24_000,
            dt: DEFAULT_DT,
        }
    }
}

/// White Gaussian background with prototypes planted at random, non-overlapping
/// registration timestamps.
pub fn synthesize_recording<R: Rng + ?Sized>(
    prototypes: &[SpikePrototype],
    cfg: &SynthesisConfig,
    rng: &mut R,
) -> Result<Recording> {
    if cfg.min_gap < WINDOW_LEN {
        return Err(Error::InvalidParams(format!(
            "min_gap must be >= {WINDOW_LEN} (got {})",
            cfg.min_gap
        )));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::InvalidParams("noise_sigma must be >= 0".into()));
    }
    if prototypes.is_empty() {
        return Err(Error::InvalidInput("no prototypes".into()));
    }
    let n = prototypes.len() * cfg.n_spikes_per_class;
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut samples: Vec<f64> = if cfg.noise_sigma > 0.0 {
        (0..cfg.len).map(|_| noise.sample(rng)).collect()
    } else {
        vec![0.0; cfg.len]
    };
    if n == 0 {
        return Recording::new(samples, cfg.dt, Vec::new());
    }
    // Timestamps live in [PRE_SAMPLES, len - POST_SAMPLES - 1].
    let usable = cfg
        .len
        .checked_sub(PRE_SAMPLES + POST_SAMPLES + 1)
        .ok_or_else(|| Error::Infeasible("recording shorter than one window".into()))?;
    let packed = (n - 1) * cfg.min_gap;
    if packed > usable {
        return Err(Error::Infeasible(format!(
            "{n} spikes with gap {} need {} samples, have {}",
            cfg.min_gap,
            packed + WINDOW_LEN,
            cfg.len
        )));
    }
    let slack = usable - packed;
    let mut offsets: Vec<usize> = (0..n).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();
    let mut labels: Vec<usize> = (0..n).map(|i| i % prototypes.len()).collect();
    labels.shuffle(rng);
    let mut ground_truth = Vec::with_capacity(n);
    for (i, (&off, &p)) in offsets.iter().zip(&labels).enumerate() {
        let t = PRE_SAMPLES + off + i * cfg.min_gap;
        let proto = &prototypes[p];
        for (dst, src) in samples[t - PRE_SAMPLES..].iter_mut().zip(&proto.samples) {
            *dst += src;
        }
        ground_truth.push(GroundTruth {
            index: t,
            class: proto.class,
        });
    }
    Recording::new(samples, cfg.dt, ground_truth)
}

/// Spike-free windows of `len` samples taken from gaps between ground-truth
/// windows.
pub fn background_windows(rec: &Recording, len: usize, max: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut cursor = 0usize;
    let mut bounds: Vec<(usize, usize)> = rec
        .ground_truth
        .iter()
        .map(|g| (g.index.saturating_sub(PRE_SAMPLES), g.index + POST_SAMPLES + 1))
        .collect();
    bounds.push((rec.samples.len(), rec.samples.len()));
    for (lo, hi) in bounds {
        while cursor + len <= lo && out.len() < max {
            out.push(rec.samples[cursor..cursor + len].to_vec());
            cursor += len;
        }
        cursor = cursor.max(hi);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sorter_conditioning_lifts_class_one_peak_past_threshold() {
        let v = Conditioner::SORTER.apply(1.042);
        assert!((v - (-1.9846)).abs() < 1e-12);
        assert!(v < -1.2);
        assert_eq!(Conditioner::new(-3.0, 0.25).unwrap().apply(0.0), 0.25);
    }

    #[test]
    fn texel_conditioning_range() {
        let v = Conditioner::TEXEL.apply(0.850);
        assert!((v - 0.745).abs() < 1e-12);
        assert!((0.67..=0.78).contains(&v));
    }

    #[test]
    fn zero_gain_rejected() {
        assert!(Conditioner::new(0.0, 1.0).is_err());
    }

    #[test]
    fn default_prototypes_hit_reference_extrema() {
        let expect = [(1.042, -0.33), (0.968, -0.52), (0.850, -0.30)];
        for (p, (mx, mn)) in default_prototypes().iter().zip(expect) {
            assert_eq!(p.samples.len(), WINDOW_LEN);
            assert!((p.max() - mx).abs() < 1e-12, "{} max {}", p.class, p.max());
            assert!((p.min() - mn).abs() < 1e-12, "{} min {}", p.class, p.min());
        }
    }

    #[test]
    fn averaging_identity_and_pair_mean() {
        let p = &default_prototypes()[0];
        let copies = vec![SpikeInstance::from_prototype(p); 10];
        let avg = average_prototype(&copies).unwrap();
        for (a, b) in avg.samples.iter().zip(&p.samples) {
            assert!((a - b).abs() < 1e-15);
        }

        let a = SpikeInstance {
            class: SpikeClass::Two,
            timestamp: None,
            samples: (0..WINDOW_LEN).map(|i| i as f64).collect(),
        };
        let b = SpikeInstance {
            samples: (0..WINDOW_LEN).map(|i| 2.0 - i as f64).collect(),
            ..a.clone()
        };
        let avg = average_prototype(&[a, b]).unwrap();
        assert!(avg.samples.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn averaging_errors() {
        assert!(average_prototype(&[]).is_err());
        let p = default_prototypes();
        let mixed = [
            SpikeInstance::from_prototype(&p[0]),
            SpikeInstance::from_prototype(&p[1]),
        ];
        assert!(average_prototype(&mixed).is_err());
        let mut short = SpikeInstance::from_prototype(&p[0]);
        short.samples.pop();
        assert!(average_prototype(&[SpikeInstance::from_prototype(&p[0]), short]).is_err());
    }

    #[test]
    fn averaging_reduces_noise_variance_tenfold() {
        let cfg = SynthesisConfig::default();
        let protos = default_prototypes();
        let sigma2 = cfg.noise_sigma * cfg.noise_sigma;
        let mut ratio_sum = 0.0;
        let seeds = 40;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rec = synthesize_recording(&protos, &cfg, &mut rng).unwrap();
            let inst: Vec<_> = extract_instances(&rec, PRE_SAMPLES, POST_SAMPLES)
                .unwrap()
                .into_iter()
                .filter(|i| i.class == SpikeClass::One)
                .collect();
            assert_eq!(inst.len(), 10);
            let avg = average_prototype(&inst).unwrap();
            let var = avg
                .samples
                .iter()
                .zip(&protos[0].samples)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / WINDOW_LEN as f64;
            ratio_sum += sigma2 / var;
        }
        let ratio = ratio_sum / seeds as f64;
        assert!((8.0..12.5).contains(&ratio), "variance reduction {ratio}");
    }

    #[test]
    fn extraction_window_bounds() {
        let rec = Recording::new(
            (0..200).map(|i| i as f64).collect(),
            DEFAULT_DT,
            vec![GroundTruth {
                index: 50,
                class: SpikeClass::One,
            }],
        )
        .unwrap();
        let inst = extract_instances(&rec, PRE_SAMPLES, POST_SAMPLES).unwrap();
        assert_eq!(inst[0].samples.len(), 100);
        assert_eq!(inst[0].samples[0], 31.0);
        assert_eq!(inst[0].samples[99], 130.0);

        let rec = Recording::new(
            vec![0.0; 200],
            DEFAULT_DT,
            vec![GroundTruth {
                index: 10,
                class: SpikeClass::One,
            }],
        )
        .unwrap();
        assert!(matches!(
            extract_instances(&rec, PRE_SAMPLES, POST_SAMPLES),
            Err(Error::OutOfBounds { index: 10, .. })
        ));
    }

    #[test]
    fn single_noiseless_spike_round_trips() {
        let protos = default_prototypes();
        let cfg = SynthesisConfig {
            n_spikes_per_class: 1,
            noise_sigma: 0.0,
            len: 1_000,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rec = synthesize_recording(&protos[..1], &cfg, &mut rng).unwrap();
        assert_eq!(rec.ground_truth.len(), 1);
        let t = rec.ground_truth[0].index;
        for (i, &v) in rec.samples.iter().enumerate() {
            let expect = if i + PRE_SAMPLES >= t && i < t + POST_SAMPLES + 1 {
                protos[0].samples[i + PRE_SAMPLES - t]
            } else {
                0.0
            };
            assert_eq!(v, expect);
        }
        let inst = extract_instances(&rec, PRE_SAMPLES, POST_SAMPLES).unwrap();
        assert_eq!(inst[0].samples, protos[0].samples);
    }

    #[test]
    fn extraction_recovers_planted_spike_plus_noise() {
        let protos = default_prototypes();
        let cfg = SynthesisConfig {
            n_spikes_per_class: 1,
            len: 1_000,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rec = synthesize_recording(&protos[1..2], &cfg, &mut rng).unwrap();
        // regenerate the noise with the same stream to get the planted noise
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, cfg.noise_sigma).unwrap();
        let bg: Vec<f64> = (0..cfg.len).map(|_| noise.sample(&mut rng)).collect();
        let t = rec.ground_truth[0].index;
        let inst = &extract_instances(&rec, PRE_SAMPLES, POST_SAMPLES).unwrap()[0];
        for j in 0..WINDOW_LEN {
            assert_eq!(inst.samples[j], bg[t - PRE_SAMPLES + j] + protos[1].samples[j]);
        }
    }

    #[test]
    fn infeasible_packing() {
        let cfg = SynthesisConfig {
            n_spikes_per_class: 10,
            len: 2_000,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            synthesize_recording(&default_prototypes(), &cfg, &mut rng),
            Err(Error::Infeasible(_))
        ));
        let cfg = SynthesisConfig {
            min_gap: 50,
            ..Default::default()
        };
        assert!(synthesize_recording(&default_prototypes(), &cfg, &mut rng).is_err());
    }

    #[test]
    fn background_noise_stays_sub_threshold_after_conditioning() {
        let cfg = SynthesisConfig::default();
        let c = Conditioner::SORTER;
        // 6 sigma excursion of the background stays inside the dead zone
        assert!(c.apply(6.0 * cfg.noise_sigma) > -1.2);
        for p in default_prototypes() {
            assert!(c.apply(p.max()) < -1.2);
        }
    }

    #[test]
    fn repeatability_stream_layout() {
        let protos = default_prototypes();
        let pools = InstancePools {
            averaged: protos.iter().map(|p| (p.class, p.clone())).collect(),
            ..Default::default()
        };
        let order = [SpikeClass::Three, SpikeClass::Two, SpikeClass::One];
        let spec = TripletSpec::new(order, InstanceSource::Averaged, Pulse::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = build_triplet_stream(&vec![spec; 10], &pools, DEFAULT_DT, &mut rng).unwrap();
        assert_eq!(s.spike_segments().count(), 30);
        assert_eq!(s.resets.len(), 10);
        assert_eq!(s.waveform.len(), 3_000);
        let mut rng2 = ChaCha8Rng::seed_from_u64(99);
        let s2 = build_triplet_stream(&vec![spec; 10], &pools, DEFAULT_DT, &mut rng2).unwrap();
        assert_eq!(s, s2);

        let one = build_triplet_stream(&[spec], &pools, DEFAULT_DT, &mut rng).unwrap();
        assert_eq!(one.segments.len(), 3);
        assert_eq!(one.resets.len(), 1);
        assert_eq!(one.resets[0].position, 300);
    }

    #[test]
    fn triplet_spec_rejects_repeats() {
        let bad = [SpikeClass::One, SpikeClass::One, SpikeClass::Two];
        assert!(TripletSpec::new(bad, InstanceSource::Averaged, Pulse::default()).is_err());
    }

    #[test]
    fn background_segments_open_each_triplet() {
        let protos = default_prototypes();
        let pools = InstancePools {
            averaged: protos.iter().map(|p| (p.class, p.clone())).collect(),
            background_len: 100,
            ..Default::default()
        };
        let spec = TripletSpec::new(
            [SpikeClass::Three, SpikeClass::Two, SpikeClass::One],
            InstanceSource::Averaged,
            Pulse::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = build_triplet_stream(&[spec, spec], &pools, DEFAULT_DT, &mut rng).unwrap();
        assert_eq!(s.segments.len(), 8);
        assert_eq!(s.segments[0].kind, SegmentKind::Background);
        assert_eq!(s.segments[4].start, 400);
        assert_eq!(s.resets[0].position, 400);
    }

    #[test]
    fn background_windows_avoid_spikes() {
        let cfg = SynthesisConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rec = synthesize_recording(&default_prototypes(), &cfg, &mut rng).unwrap();
        let bg = background_windows(&rec, 100, 50);
        assert!(!bg.is_empty());
        for w in &bg {
            assert!(w.iter().all(|v| v.abs() < 8.0 * cfg.noise_sigma));
        }
    }

    proptest! {
        #[test]
        fn conditioning_is_affine(u in -2.0f64..2.0, w in -2.0f64..2.0, a in -3.0f64..3.0,
                                  gain in 0.05f64..2.0, offset in -1.0f64..1.0) {
            let c = Conditioner::new(-gain, offset).unwrap();
            let lhs = c.apply(a * u + (1.0 - a) * w);
            let rhs = a * c.apply(u) + (1.0 - a) * c.apply(w);
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn averaging_is_permutation_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let insts: Vec<SpikeInstance> = (0..5).map(|_| SpikeInstance {
                class: SpikeClass::Three,
                timestamp: None,
                samples: (0..WINDOW_LEN).map(|_| rng.random_range(-1.0..1.0)).collect(),
            }).collect();
            let a = average_prototype(&insts).unwrap();
            let mut shuffled = insts.clone();
            shuffled.shuffle(&mut rng);
            let b = average_prototype(&shuffled).unwrap();
            for (x, y) in a.samples.iter().zip(&b.samples) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn random_triplets_hold_each_class_once(seed in any::<u64>()) {
            let protos = default_prototypes();
            let mut pools = InstancePools::default();
            for p in &protos {
                pools.instances.insert(p.class, vec![SpikeInstance::from_prototype(p); 3]);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let specs: Vec<_> = (0..10)
                .map(|_| TripletSpec::shuffled(InstanceSource::RandomInstance, Pulse::default(), &mut rng))
                .collect();
            let s = build_triplet_stream(&specs, &pools, DEFAULT_DT, &mut rng).unwrap();
            for t in 0..10 {
                let mut classes: Vec<_> = s.segments.iter().filter(|g| g.triplet == t)
                    .filter_map(|g| match g.kind { SegmentKind::Spike(c) => Some(c), _ => None })
                    .collect();
                classes.sort();
                prop_assert_eq!(classes, SpikeClass::ALL.to_vec());
            }
            let mut rng_a = ChaCha8Rng::seed_from_u64(seed);
            let specs_a: Vec<_> = (0..10)
                .map(|_| TripletSpec::shuffled(InstanceSource::RandomInstance, Pulse::default(), &mut rng_a))
                .collect();
            prop_assert_eq!(specs_a, specs);
        }

        #[test]
        fn synthesized_ground_truth_is_extractable(seed in any::<u64>(), n in 1usize..15) {
            let cfg = SynthesisConfig { n_spikes_per_class: n, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rec = synthesize_recording(&default_prototypes(), &cfg, &mut rng).unwrap();
            prop_assert_eq!(rec.ground_truth.len(), 3 * n);
            for w in rec.ground_truth.windows(2) {
                prop_assert!(w[1].index - w[0].index >= cfg.min_gap);
            }
            let inst = extract_instances(&rec, PRE_SAMPLES, POST_SAMPLES).unwrap();
            prop_assert_eq!(inst.len(), 3 * n);
        }
    }
}
