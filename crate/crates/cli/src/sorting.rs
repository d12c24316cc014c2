//! Triplet experiments on the memristive sorter.

use std::collections::BTreeMap;

use memspike_core::device::{calibrate_k_neg, DeviceParams, DeviceState};
use memspike_core::io::load_recording;
use memspike_core::reference::{CLASS_ONE_TARGET_FRAC, CLASS_ONE_TARGET_R};
use memspike_core::signal::{
    average_prototype, background_windows, build_triplet_stream, default_prototypes, extract_instances,
    synthesize_recording, AnnotatedStream, InstancePools, InstanceSource, Recording, SegmentKind, SpikeClass,
    SpikeInstance, TripletSpec, POST_SAMPLES, PRE_SAMPLES,
};
use memspike_core::sorter::{
    batch_summaries, classify, clusters, detect, estimate_noise, features, fit_classifier, run_schedule,
    segment_features, separation_margin, BatchSummary, ClassCluster, ClassifiedRaster, FeaturePoint,
    NoiseEstimate, PlaneClassifier, ReadTrace, WindowKind,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ClassifierKind, Experiment, ExperimentConfig};
use crate::RunError;

/// Everything a sorter run produces.
#[derive(Debug, Clone, Serialize)]
pub struct SorterRun {
    pub device: DeviceParams,
    /// `k_neg` derived from the averaged class-I prototype, when requested.
    pub calibrated_k_neg: Option<f64>,
    #[serde(skip)]
    pub stream: AnnotatedStream,
    #[serde(skip)]
    pub trace: ReadTrace,
    /// One point per consecutive pair of reads, labeled by the segment the
    /// pair ends in.
    #[serde(skip)]
    pub bin_points: Vec<FeaturePoint>,
    /// One point per segment.
    #[serde(skip)]
    pub segment_points: Vec<FeaturePoint>,
    pub noise: NoiseEstimate,
    pub detected: Vec<bool>,
    pub raster: ClassifiedRaster,
    pub clusters: Vec<ClassCluster>,
    pub separation_margin: Option<f64>,
    pub batches: Vec<BatchSummary>,
    /// Segment index of the planted double spike.
    pub double_spike: Option<usize>,
}

impl SorterRun {
    pub fn event_points(&self) -> impl Iterator<Item = &FeaturePoint> {
        self.segment_points.iter().filter(|p| p.kind == WindowKind::Event)
    }

    pub fn noise_points(&self) -> impl Iterator<Item = &FeaturePoint> {
        self.segment_points.iter().filter(|p| p.kind == WindowKind::Noise)
    }

    /// Mean of the per-class coefficients of variation.
    pub fn mean_cv(&self) -> f64 {
        let cvs: Vec<f64> = self
            .clusters
            .iter()
            .map(|c| c.spread_frac / c.centroid_frac.abs())
            .collect();
        cvs.iter().sum::<f64>() / cvs.len().max(1) as f64
    }
}

/// Loads the configured recording or synthesizes one.
pub fn recording(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Recording, RunError> {
    match &cfg.recording {
        Some(path) => load_recording(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display()))),
        None => Ok(synthesize_recording(&default_prototypes(), &cfg.synthesis, rng)?),
    }
}

/// Averaged prototypes, instance pools and background stretches.
pub fn pools(
    rec: &Recording,
    average_of: usize,
    background_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<InstancePools, RunError> {
    let all = extract_instances(rec, PRE_SAMPLES, POST_SAMPLES)?;
    let mut instances: BTreeMap<SpikeClass, Vec<SpikeInstance>> = BTreeMap::new();
    for inst in all {
        instances.entry(inst.class).or_default().push(inst);
    }
    let mut averaged = BTreeMap::new();
    for class in SpikeClass::ALL {
        let pool = instances
            .get(&class)
            .ok_or_else(|| RunError::Simulation(memspike_core::Error::InvalidInput(format!(
                "recording has no class {class} spikes"
            ))))?;
        let picked: Vec<SpikeInstance> = pool.choose_multiple(rng, average_of).cloned().collect();
        averaged.insert(class, average_prototype(&picked)?);
    }
    let background = if background_len > 0 {
        background_windows(rec, background_len, 64)
    } else {
        Vec::new()
    };
    Ok(InstancePools {
        averaged,
        instances,
        background,
        background_len,
    })
}

/// Appends `extra` to segment `i`, shifting everything after it.
pub fn plant_after(stream: &mut AnnotatedStream, i: usize, extra: &[f64]) {
    let at = stream.segments[i].end();
    stream.waveform.samples.splice(at..at, extra.iter().copied());
    stream.segments[i].len += extra.len();
    for g in stream.segments.iter_mut().skip(i + 1) {
        g.start += extra.len();
    }
    for m in &mut stream.resets {
        if m.position >= at {
            m.position += extra.len();
        }
    }
}

/// Runs the repeatability (fixed order, averaged spikes) or randomized
/// (shuffled order, random instances) triplet experiment.
pub fn run_sorter(cfg: &ExperimentConfig, experiment: Experiment, seed: u64) -> Result<SorterRun, RunError> {
    let s = &cfg.sorter;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rec = recording(cfg, &mut rng)?;
    let bg_len = if s.background { s.schedule.batch } else { 0 };
    let pools = pools(&rec, s.average_of, bg_len, &mut rng)?;

    let mut device = cfg.device.clone();
    let mut calibrated_k_neg = None;
    if s.calibrate_k_neg {
        let proto = &pools.averaged[&SpikeClass::One];
        let drive = s.conditioner.condition_slice(&proto.samples);
        let k = calibrate_k_neg(&drive, rec.dt, CLASS_ONE_TARGET_R, CLASS_ONE_TARGET_FRAC, &device)?;
        device.k_neg = k;
        calibrated_k_neg = Some(k);
    }

    let specs: Vec<TripletSpec> = match experiment {
        Experiment::Randomized => (0..s.triplets)
            .map(|_| TripletSpec::shuffled(InstanceSource::RandomInstance, s.reset, &mut rng))
            .collect(),
        _ => {
            let spec = TripletSpec::new(s.order, InstanceSource::Averaged, s.reset)?;
            vec![spec; s.triplets]
        }
    };
    let mut stream = build_triplet_stream(&specs, &pools, rec.dt, &mut rng)?;

    let mut double_spike = None;
    if let Some(d) = s.double_spike {
        let i = stream
            .segments
            .iter()
            .position(|g| g.triplet == d.triplet && g.kind == SegmentKind::Spike(SpikeClass::One))
            .ok_or_else(|| RunError::Config(format!("triplet {} has no class-I spike", d.triplet)))?;
        let second = pools.instances[&SpikeClass::One]
            .choose(&mut rng)
            .expect("class-I pool checked above")
            .samples
            .clone();
        plant_after(&mut stream, i, &second);
        double_spike = Some(i);
    }

    let driven = stream.conditioned(&s.conditioner);
    let mut dev = DeviceState::at_baseline(rng.random(), &device);
    let trace = run_schedule(&mut dev, &driven, &s.schedule, &device)?;

    let mut bin_points = features(&trace)?;
    for p in &mut bin_points {
        if p.kind == WindowKind::Event {
            p.truth = stream
                .segments
                .iter()
                .find(|g| g.start < p.index && p.index <= g.end())
                .and_then(|g| match g.kind {
                    SegmentKind::Spike(c) => Some(c),
                    SegmentKind::Background => None,
                });
        }
    }
    let segment_points = segment_features(&trace, &stream.segments)?;
    let noise = estimate_noise(&bin_points, s.noise_multiplier)?;
    let detections = detect(&segment_points, noise.theta);
    let mut detected = vec![false; segment_points.len()];
    for d in &detections {
        detected[d.point] = true;
    }

    // The planted probe is classified but never trained on.
    let training: Vec<FeaturePoint> = segment_points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != double_spike)
        .map(|(_, p)| *p)
        .collect();
    let raster = match s.classifier {
        ClassifierKind::Threshold => classify(&segment_points, &fit_classifier(&training)?, noise.theta),
        ClassifierKind::Plane => classify(&segment_points, &PlaneClassifier::fit(&training, s.epochs)?, noise.theta),
    };

    Ok(SorterRun {
        device,
        calibrated_k_neg,
        clusters: clusters(&training),
        separation_margin: separation_margin(&training),
        batches: batch_summaries(&trace)?,
        stream,
        trace,
        bin_points,
        segment_points,
        noise,
        detected,
        raster,
        double_spike,
    })
}
