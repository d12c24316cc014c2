//! Memristive spike sorter: read scheduling, fractional-change features,
//! noise estimation, detection and classification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::device::{DeviceParams, DeviceState};
use crate::error::{Error, Result};
use crate::signal::{AnnotatedStream, Segment, SegmentKind, SpikeClass};

/// Batch/bin grouping of input samples for reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadSchedule {
    pub batch: usize,
    pub bin: usize,
}

impl Default for ReadSchedule {
    fn default() -> Self {
        Self { batch: 100, bin: 10 }
    }
}

impl ReadSchedule {
    pub fn new(batch: usize, bin: usize) -> Result<Self> {
        let s = Self { batch, bin };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.bin == 0 || self.batch % self.bin != 0 {
            return Err(Error::InvalidParams(format!(
                "bin ({}) must divide batch ({}) and both must be >= 1",
                self.bin, self.batch
            )));
        }
        Ok(())
    }

    /// Reads per full batch: start, one per bin, and the paused noise read.
    pub fn reads_per_batch(&self) -> usize {
        self.batch / self.bin + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadKind {
    BatchStart,
    Bin,
    /// Extra read at the end of a batch while the feed is paused.
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Read {
    /// Input samples consumed when the read was taken.
    pub index: usize,
    pub r: f64,
    pub kind: ReadKind,
    pub batch: usize,
    /// A reset pulse was applied between the previous read and this one.
    pub after_reset: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadTrace {
    pub reads: Vec<Read>,
}

impl ReadTrace {
    /// Lays out raw reads in the standard per-batch order
    /// (start, one per bin, noise).
    pub fn from_batches<const N: usize>(batches: &[[f64; N]], sched: &ReadSchedule) -> Result<Self> {
        sched.validate()?;
        if N != sched.reads_per_batch() {
            return Err(Error::InvalidInput(format!(
                "schedule expects {} reads per batch, got {N}",
                sched.reads_per_batch()
            )));
        }
        let mut reads = Vec::with_capacity(batches.len() * N);
        for (b, rs) in batches.iter().enumerate() {
            let base = b * sched.batch;
            for (j, &r) in rs.iter().enumerate() {
                let (index, kind) = match j {
                    0 => (base, ReadKind::BatchStart),
                    j if j == N - 1 => (base + sched.batch, ReadKind::Noise),
                    j => (base + j * sched.bin, ReadKind::Bin),
                };
                reads.push(Read {
                    index,
                    r,
                    kind,
                    batch: b,
                    after_reset: false,
                });
            }
        }
        Ok(Self { reads })
    }

    pub fn batch(&self, b: usize) -> impl Iterator<Item = &Read> {
        self.reads.iter().filter(move |r| r.batch == b)
    }

    pub fn batch_count(&self) -> usize {
        self.reads.last().map_or(0, |r| r.batch + 1)
    }
}

/// Feeds the conditioned stream through the device under the batch/bin read
/// schedule. Reset markers are applied between samples and never count
/// towards a bin.
pub fn run_schedule(
    dev: &mut DeviceState,
    stream: &AnnotatedStream,
    sched: &ReadSchedule,
    params: &DeviceParams,
) -> Result<ReadTrace> {
    sched.validate()?;
    let samples = &stream.waveform.samples;
    let dt = stream.waveform.dt;
    if samples.is_empty() {
        return Err(Error::InvalidInput("empty stream".into()));
    }
    let mut resets = stream.resets.clone();
    resets.sort_by_key(|m| m.position);
    let mut next_reset = 0;
    let mut pending = false;
    let mut apply_resets_at = |pos: usize, dev: &mut DeviceState, pending: &mut bool| -> Result<()> {
        while next_reset < resets.len() && resets[next_reset].position <= pos {
            dev.reset_pulse(resets[next_reset].pulse, params)?;
            next_reset += 1;
            *pending = true;
        }
        Ok(())
    };

    let mut reads = Vec::new();
    let push = |reads: &mut Vec<Read>, dev: &mut DeviceState, index, kind, batch, pending: &mut bool| {
        reads.push(Read {
            index,
            r: dev.read(params),
            kind,
            batch,
            after_reset: std::mem::take(pending),
        });
    };

    for (b, batch_start) in (0..samples.len()).step_by(sched.batch).enumerate() {
        let batch_end = (batch_start + sched.batch).min(samples.len());
        apply_resets_at(batch_start, dev, &mut pending)?;
        push(&mut reads, dev, batch_start, ReadKind::BatchStart, b, &mut pending);
        for bin_start in (batch_start..batch_end).step_by(sched.bin) {
            let bin_end = (bin_start + sched.bin).min(batch_end);
            for (i, &v) in samples.iter().enumerate().take(bin_end).skip(bin_start) {
                apply_resets_at(i, dev, &mut pending)?;
                dev.apply_sample(v, dt, params)?;
            }
            push(&mut reads, dev, bin_end, ReadKind::Bin, b, &mut pending);
        }
        push(&mut reads, dev, batch_end, ReadKind::Noise, b, &mut pending);
    }
    apply_resets_at(usize::MAX, dev, &mut pending)?;
    Ok(ReadTrace { reads })
}

/// `(r_final - r_initial) / r_initial`.
pub fn frac_change(r_initial: f64, r_final: f64) -> Result<f64> {
    if !(r_initial > 0.0) || !(r_final > 0.0) {
        return Err(Error::InvalidInput(format!(
            "resistances must be positive ({r_initial}, {r_final})"
        )));
    }
    Ok((r_final - r_initial) / r_initial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Event,
    Noise,
    /// The pair straddles a reset pulse.
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    /// Input-sample index of the final read of the pair.
    pub index: usize,
    pub r_initial: f64,
    pub frac_change: f64,
    pub kind: WindowKind,
    pub truth: Option<SpikeClass>,
}

/// One point per consecutive pair of reads.
pub fn features(trace: &ReadTrace) -> Result<Vec<FeaturePoint>> {
    if trace.reads.len() < 2 {
        return Err(Error::InvalidInput("need at least two reads".into()));
    }
    trace
        .reads
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let kind = if b.after_reset {
                WindowKind::Reset
            } else if b.kind == ReadKind::Noise || a.kind == ReadKind::Noise {
                WindowKind::Noise
            } else {
                WindowKind::Event
            };
            Ok(FeaturePoint {
                index: b.index,
                r_initial: a.r,
                frac_change: frac_change(a.r, b.r)?,
                kind,
                truth: None,
            })
        })
        .collect()
}

/// One point per annotated segment: from the last read taken at or before the
/// segment start to the first bin read at or after its end. Background
/// segments become noise windows.
pub fn segment_features(trace: &ReadTrace, segments: &[Segment]) -> Result<Vec<FeaturePoint>> {
    segments
        .iter()
        .map(|seg| {
            let start = trace
                .reads
                .iter()
                .rev()
                .find(|r| r.index <= seg.start)
                .ok_or_else(|| Error::InvalidInput(format!("no read before sample {}", seg.start)))?;
            let end = trace
                .reads
                .iter()
                .find(|r| r.kind == ReadKind::Bin && r.index >= seg.end())
                .ok_or_else(|| Error::InvalidInput(format!("no read after sample {}", seg.end())))?;
            let (kind, truth) = match seg.kind {
                SegmentKind::Background => (WindowKind::Noise, None),
                SegmentKind::Spike(c) => (WindowKind::Event, Some(c)),
            };
            Ok(FeaturePoint {
                index: seg.start,
                r_initial: start.r,
                frac_change: frac_change(start.r, end.r)?,
                kind,
                truth,
            })
        })
        .collect()
}

/// Late-window fractional changes of one batch: the last three reads
/// (two final bin reads and the noise read) measured against the first bin
/// read (`settled`) and against the batch-start read (`from_start`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch: usize,
    pub r_initial: f64,
    pub settled: [f64; 3],
    pub settled_mean: f64,
    pub from_start: [f64; 3],
    pub from_start_mean: f64,
}

pub fn batch_summaries(trace: &ReadTrace) -> Result<Vec<BatchSummary>> {
    (0..trace.batch_count())
        .map(|b| {
            let rs: Vec<f64> = trace.batch(b).map(|r| r.r).collect();
            if rs.len() < 4 {
                return Err(Error::InvalidInput(format!("batch {b} has fewer than four reads")));
            }
            let n = rs.len();
            let tail = [rs[n - 3], rs[n - 2], rs[n - 1]];
            let mut settled = [0.0; 3];
            let mut from_start = [0.0; 3];
            for k in 0..3 {
                settled[k] = frac_change(rs[1], tail[k])?;
                from_start[k] = frac_change(rs[0], tail[k])?;
            }
            Ok(BatchSummary {
                batch: b,
                r_initial: rs[1],
                settled,
                settled_mean: settled.iter().sum::<f64>() / 3.0,
                from_start,
                from_start_mean: from_start.iter().sum::<f64>() / 3.0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub mean_abs: f64,
    pub std_abs: f64,
    pub multiplier: f64,
    pub theta: f64,
}

/// `theta = mean(|f|) + m * std(|f|)` over noise windows (population std).
pub fn estimate_noise(points: &[FeaturePoint], multiplier: f64) -> Result<NoiseEstimate> {
    let mags: Vec<f64> = points
        .iter()
        .filter(|p| p.kind == WindowKind::Noise)
        .map(|p| p.frac_change.abs())
        .collect();
    if mags.is_empty() {
        return Err(Error::InvalidInput("no noise-window points".into()));
    }
    let n = mags.len() as f64;
    let mean_abs = mags.iter().sum::<f64>() / n;
    let std_abs = (mags.iter().map(|m| (m - mean_abs).powi(2)).sum::<f64>() / n).sqrt();
    Ok(NoiseEstimate {
        mean_abs,
        std_abs,
        multiplier,
        theta: mean_abs + multiplier * std_abs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Position of the point in the input slice.
    pub point: usize,
    pub index: usize,
    pub r_initial: f64,
    pub frac_change: f64,
}

/// Event windows whose fractional change strictly exceeds `theta`.
pub fn detect(points: &[FeaturePoint], theta: f64) -> Vec<Detection> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind == WindowKind::Event && p.frac_change > theta)
        .map(|(i, p)| Detection {
            point: i,
            index: p.index,
            r_initial: p.r_initial,
            frac_change: p.frac_change,
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

fn by_class(points: &[FeaturePoint]) -> BTreeMap<SpikeClass, Vec<&FeaturePoint>> {
    let mut m: BTreeMap<SpikeClass, Vec<&FeaturePoint>> = BTreeMap::new();
    for p in points {
        if let (WindowKind::Event, Some(c)) = (p.kind, p.truth) {
            m.entry(c).or_default().push(p);
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCluster {
    pub class: SpikeClass,
    pub count: usize,
    pub centroid_r: f64,
    pub centroid_frac: f64,
    pub spread_frac: f64,
}

/// Cluster statistics per ground-truth class, in class order.
pub fn clusters(points: &[FeaturePoint]) -> Vec<ClassCluster> {
    by_class(points)
        .into_iter()
        .map(|(class, ps)| {
            let rs: Vec<f64> = ps.iter().map(|p| p.r_initial).collect();
            let fs: Vec<f64> = ps.iter().map(|p| p.frac_change).collect();
            let (centroid_frac, spread_frac) = mean_std(&fs);
            ClassCluster {
                class,
                count: ps.len(),
                centroid_r: mean_std(&rs).0,
                centroid_frac,
                spread_frac,
            }
        })
        .collect()
}

/// Smallest gap between the extremes of adjacent clusters along the
/// fractional-change axis; negative when clusters overlap.
pub fn separation_margin(points: &[FeaturePoint]) -> Option<f64> {
    let groups = by_class(points);
    let mut ranges: Vec<(f64, f64)> = groups
        .values()
        .map(|ps| {
            ps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.frac_change), hi.max(p.frac_change))
            })
        })
        .collect();
    if ranges.len() < 2 {
        return None;
    }
    ranges.sort_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)));
    ranges.windows(2).map(|w| w[1].0 - w[0].1).reduce(f64::min)
}

/// Outcome of classifying one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub class: Option<SpikeClass>,
    pub outlier: bool,
}

pub trait Classifier {
    /// Class for a point already known to be a detection.
    fn assign(&self, p: &FeaturePoint) -> SpikeClass;
    fn is_outlier(&self, p: &FeaturePoint) -> bool;
}

/// 1-D classifier on fractional change: thresholds at midpoints between
/// sorted class centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    /// Clusters sorted by ascending centroid.
    pub clusters: Vec<ClassCluster>,
    pub thresholds: Vec<f64>,
    /// Spread multiplier for outlier flagging above the top cluster.
    pub outlier_spread: f64,
}

/// Outlier spread floor relative to the top centroid, so a zero-width
/// cluster does not flag its own members.
const SPREAD_FLOOR: f64 = 1e-9;

pub fn fit_classifier(points: &[FeaturePoint]) -> Result<ThresholdClassifier> {
    let mut cl = clusters(points);
    if cl.is_empty() {
        return Err(Error::InvalidInput("no labeled event points".into()));
    }
    cl.sort_by(|a, b| a.centroid_frac.total_cmp(&b.centroid_frac));
    for w in cl.windows(2) {
        if w[0].centroid_frac == w[1].centroid_frac {
            return Err(Error::Degenerate(format!(
                "classes {} and {} share centroid {}",
                w[0].class, w[1].class, w[0].centroid_frac
            )));
        }
    }
    let thresholds = cl
        .windows(2)
        .map(|w| 0.5 * (w[0].centroid_frac + w[1].centroid_frac))
        .collect();
    Ok(ThresholdClassifier {
        clusters: cl,
        thresholds,
        outlier_spread: 3.0,
    })
}

impl ThresholdClassifier {
    pub fn outlier_limit(&self) -> f64 {
        let top = self.clusters.last().expect("fitted classifier has clusters");
        let spread = top.spread_frac.max(SPREAD_FLOOR * top.centroid_frac.abs());
        top.centroid_frac + self.outlier_spread * spread
    }
}

impl Classifier for ThresholdClassifier {
    fn assign(&self, p: &FeaturePoint) -> SpikeClass {
        // ties at a threshold go to the lower class
        let k = self.thresholds.iter().filter(|&&t| p.frac_change > t).count();
        self.clusters[k].class
    }

    fn is_outlier(&self, p: &FeaturePoint) -> bool {
        p.frac_change > self.outlier_limit()
    }
}

/// Multiclass linear classifier in the standardized (r_initial, frac_change)
/// plane: `argmax_c w_c . x + b_c`. Starts from the nearest-centroid solution
/// and refines with a pocket perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneClassifier {
    pub classes: Vec<SpikeClass>,
    pub weights: Vec<[f64; 2]>,
    pub biases: Vec<f64>,
    pub mean: [f64; 2],
    pub scale: [f64; 2],
    pub outlier: ThresholdClassifier,
}

impl PlaneClassifier {
    pub fn fit(points: &[FeaturePoint], epochs: usize) -> Result<Self> {
        let outlier = fit_classifier(points)?;
        let train: Vec<(&FeaturePoint, SpikeClass)> = points
            .iter()
            .filter(|p| p.kind == WindowKind::Event)
            .filter_map(|p| p.truth.map(|c| (p, c)))
            .collect();
        let xs: Vec<[f64; 2]> = train.iter().map(|(p, _)| [p.r_initial, p.frac_change]).collect();
        let mut mean = [0.0; 2];
        let mut scale = [1.0; 2];
        for d in 0..2 {
            let col: Vec<f64> = xs.iter().map(|x| x[d]).collect();
            let (m, s) = mean_std(&col);
            mean[d] = m;
            scale[d] = if s > 0.0 { s } else { 1.0 };
        }
        let z = |x: [f64; 2]| [(x[0] - mean[0]) / scale[0], (x[1] - mean[1]) / scale[1]];
        let classes: Vec<SpikeClass> = outlier.clusters.iter().map(|c| c.class).collect();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for c in &outlier.clusters {
            let mu = z([c.centroid_r, c.centroid_frac]);
            weights.push(mu);
            biases.push(-0.5 * (mu[0] * mu[0] + mu[1] * mu[1]));
        }
        let mut model = Self {
            classes,
            weights,
            biases,
            mean,
            scale,
            outlier,
        };
        let errors = |m: &Self| train.iter().filter(|(p, c)| m.assign(p) != *c).count();
        let mut best = model.clone();
        let mut best_err = errors(&model);
        let lr = 0.1;
        for _ in 0..epochs {
            if best_err == 0 {
                break;
            }
            for (p, c) in &train {
                let x = z([p.r_initial, p.frac_change]);
                let pred = model.argmax(x);
                let truth = model.classes.iter().position(|k| k == c).expect("known class");
                if pred != truth {
                    for d in 0..2 {
                        model.weights[truth][d] += lr * x[d];
                        model.weights[pred][d] -= lr * x[d];
                    }
                    model.biases[truth] += lr;
                    model.biases[pred] -= lr;
                }
            }
            let e = errors(&model);
            if e < best_err {
                best_err = e;
                best = model.clone();
            }
        }
        Ok(best)
    }

    fn argmax(&self, x: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_s = f64::NEG_INFINITY;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let s = w[0] * x[0] + w[1] * x[1] + b;
            if s > best_s {
                best_s = s;
                best = i;
            }
        }
        best
    }
}

impl Classifier for PlaneClassifier {
    fn assign(&self, p: &FeaturePoint) -> SpikeClass {
        let x = [
            (p.r_initial - self.mean[0]) / self.scale[0],
            (p.frac_change - self.mean[1]) / self.scale[1],
        ];
        self.classes[self.argmax(x)]
    }

    fn is_outlier(&self, p: &FeaturePoint) -> bool {
        self.outlier.is_outlier(p)
    }
}

/// Rows are ground truth (noise, 1, 2, 3); columns are predictions
/// (noise, 1, 2, 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 4]; 4],
}

fn slot(c: Option<SpikeClass>) -> usize {
    c.map_or(0, |c| c.id() as usize)
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Option<SpikeClass>, predicted: Option<SpikeClass>) {
        self.counts[slot(truth)][slot(predicted)] += 1;
    }

    pub fn correct(&self) -> usize {
        (0..4).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterEntry {
    pub index: usize,
    pub r_initial: f64,
    pub frac_change: f64,
    pub kind: WindowKind,
    pub truth: Option<SpikeClass>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedRaster {
    pub entries: Vec<RasterEntry>,
    /// Present when every event point carries ground truth.
    pub confusion: Option<ConfusionMatrix>,
}

impl ClassifiedRaster {
    pub fn outliers(&self) -> impl Iterator<Item = &RasterEntry> {
        self.entries.iter().filter(|e| e.label.outlier)
    }
}

/// Labels every event window: points at or below `theta` are noise, the rest
/// take the classifier's class.
pub fn classify<C: Classifier>(points: &[FeaturePoint], clf: &C, theta: f64) -> ClassifiedRaster {
    let mut confusion = ConfusionMatrix::default();
    let mut complete = true;
    let entries = points
        .iter()
        .filter(|p| p.kind == WindowKind::Event)
        .map(|p| {
            let label = if p.frac_change > theta {
                Label {
                    class: Some(clf.assign(p)),
                    outlier: clf.is_outlier(p),
                }
            } else {
                Label {
                    class: None,
                    outlier: false,
                }
            };
            complete &= p.truth.is_some();
            confusion.record(p.truth, label.class);
            RasterEntry {
                index: p.index,
                r_initial: p.r_initial,
                frac_change: p.frac_change,
                kind: p.kind,
                truth: p.truth,
                label,
            }
        })
        .collect();
    ClassifiedRaster {
        entries,
        confusion: complete.then_some(confusion),
    }
}
