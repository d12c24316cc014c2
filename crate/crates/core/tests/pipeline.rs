use memspike_core::device::{calibrate_k_neg, noiseless_response, DeviceParams, DeviceState, Pulse, CALIBRATED_K_NEG};
use memspike_core::reference::{
    CLASS_ONE_TARGET_FRAC, CLASS_ONE_TARGET_R, TEXEL_ROWS, TRIPLET_READS, TRIPLET_SETTLED_PERCENT,
};
use memspike_core::signal::{
    build_triplet_stream, default_prototypes, extract_instances, synthesize_recording, Conditioner, InstancePools,
    InstanceSource, SpikeClass, SynthesisConfig, TripletSpec, DEFAULT_DT, POST_SAMPLES, PRE_SAMPLES,
};
use memspike_core::sorter::{
    batch_summaries, classify, features, fit_classifier, run_schedule, segment_features, ReadSchedule, ReadTrace,
    WindowKind,
};
use memspike_core::texel::{trigger_sample, CalibrationMap, TexelArray, TexelParams, TriggerSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prototype(class: SpikeClass) -> Vec<f64> {
    default_prototypes()
        .into_iter()
        .find(|p| p.class == class)
        .unwrap()
        .samples
}

#[test]
fn frozen_k_neg_matches_fresh_calibration() {
    let drive = Conditioner::SORTER.condition_slice(&prototype(SpikeClass::One));
    let k = calibrate_k_neg(
        &drive,
        DEFAULT_DT,
        CLASS_ONE_TARGET_R,
        CLASS_ONE_TARGET_FRAC,
        &DeviceParams::default(),
    )
    .unwrap();
    assert!(((k - CALIBRATED_K_NEG) / k).abs() < 1e-8, "{k} vs {CALIBRATED_K_NEG}");
    let f = noiseless_response(&drive, DEFAULT_DT, CLASS_ONE_TARGET_R, &DeviceParams::default()).unwrap();
    assert!((f - CLASS_ONE_TARGET_FRAC).abs() / CLASS_ONE_TARGET_FRAC < 1e-6);
}

#[test]
fn noiseless_response_follows_class_order() {
    let p = DeviceParams::default();
    let f: Vec<f64> = SpikeClass::ALL
        .iter()
        .map(|&c| {
            let drive = Conditioner::SORTER.condition_slice(&prototype(c));
            noiseless_response(&drive, DEFAULT_DT, 12_000.0, &p).unwrap()
        })
        .collect();
    assert!(f[0] > f[1] && f[1] > f[2] && f[2] > 0.0, "{f:?}");
}

#[test]
fn batch_one_reads_reproduce_table() {
    let trace = ReadTrace::from_batches(&TRIPLET_READS, &ReadSchedule::default()).unwrap();
    let s = batch_summaries(&trace).unwrap();
    // independent oracle: (R_k - R_2) / R_2 straight from the rows
    let rows = TRIPLET_READS[0];
    for k in 0..3 {
        let oracle = (rows[9 + k] - rows[1]) / rows[1];
        assert!((s[0].settled[k] - oracle).abs() <= 1e-15);
        assert!((oracle / (TRIPLET_SETTLED_PERCENT[0][k] * 1e-2) - 1.0).abs() < 1e-6);
    }
    // two-decimal rows still agree with the table to 1e-4
    for (b, row) in TRIPLET_SETTLED_PERCENT.iter().enumerate() {
        for k in 0..3 {
            let rel = (s[b].settled[k] / (row[k] * 1e-2) - 1.0).abs();
            assert!(rel < 1e-4, "batch {b} read {}: {rel}", k + 10);
        }
    }
}

fn noiseless_repeatability() -> (Vec<memspike_core::sorter::FeaturePoint>, memspike_core::signal::AnnotatedStream) {
    let mut pools = InstancePools::default();
    for p in default_prototypes() {
        pools.averaged.insert(p.class, p);
    }
    pools.background_len = 100;
    let spec = TripletSpec::new(
        [SpikeClass::Three, SpikeClass::Two, SpikeClass::One],
        InstanceSource::Averaged,
        Pulse::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stream = build_triplet_stream(&vec![spec; 10], &pools, DEFAULT_DT, &mut rng).unwrap();
    let params = DeviceParams::default();
    let mut dev = DeviceState::at_baseline(0, &params);
    let trace = run_schedule(&mut dev, &stream.conditioned(&Conditioner::SORTER), &ReadSchedule::default(), &params)
        .unwrap();
    (segment_features(&trace, &stream.segments).unwrap(), stream)
}

#[test]
fn noiseless_repeatability_is_perfectly_separable() {
    let (pts, _) = noiseless_repeatability();
    assert_eq!(pts.iter().filter(|p| p.kind == WindowKind::Event).count(), 30);
    assert_eq!(pts.iter().filter(|p| p.kind == WindowKind::Noise).count(), 10);
    let clf = fit_classifier(&pts).unwrap();
    let raster = classify(&pts, &clf, 1e-9);
    assert_eq!(raster.confusion.unwrap().correct(), 30);
    assert_eq!(raster.outliers().count(), 0);
    // every triplet starts from the baseline and repeats the same values
    for c in &clf.clusters {
        assert!(c.spread_frac <= 1e-12 * c.centroid_frac, "{c:?}");
    }
}

#[test]
fn bin_features_of_background_batches_are_zero() {
    let (_, stream) = noiseless_repeatability();
    let params = DeviceParams::default();
    let mut dev = DeviceState::at_baseline(0, &params);
    let trace = run_schedule(&mut dev, &stream.conditioned(&Conditioner::SORTER), &ReadSchedule::default(), &params)
        .unwrap();
    let pts = features(&trace).unwrap();
    let first_batch: Vec<_> = pts.iter().take(11).collect();
    assert!(first_batch.iter().all(|p| p.frac_change == 0.0));
}

#[test]
fn sampled_class_two_inputs_fall_in_measured_range() {
    let cfg = SynthesisConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rec = synthesize_recording(&default_prototypes(), &cfg, &mut rng).unwrap();
    let inst = extract_instances(&rec, PRE_SAMPLES, POST_SAMPLES).unwrap();
    let peak = Conditioner::TEXEL.apply(0.968);
    let sampler = TriggerSampler::half_peak(Conditioner::TEXEL.offset, peak);
    let mut seen = 0;
    for i in inst.iter().filter(|i| i.class == SpikeClass::Two) {
        if let Ok(w) = trigger_sample(&Conditioner::TEXEL.condition_slice(&i.samples), &sampler) {
            seen += 1;
            for v in w.values {
                assert!((0.67..=0.78).contains(&v), "{v}");
            }
        }
    }
    assert!(seen >= 5);
}

#[test]
fn reference_array_ranks_template_class_first() {
    let params = TexelParams::default();
    let mut array = TexelArray::blank(4, &params).unwrap();
    let two_m = TEXEL_ROWS.iter().find(|r| r.class == SpikeClass::Two && r.variant.to_string() == "M").unwrap();
    array.program(&two_m.ideal, &params).unwrap();
    let out = |row: &memspike_core::reference::TexelRow| array.output(&row.rounded, &params).unwrap();
    let best_other = TEXEL_ROWS
        .iter()
        .filter(|r| r.class != SpikeClass::Two && !(r.class == SpikeClass::One && r.variant.to_string() == "H"))
        .map(out)
        .fold(0.0, f64::max);
    for r in TEXEL_ROWS.iter().filter(|r| r.class == SpikeClass::Two) {
        assert!(out(r) > best_other);
    }
    let map = CalibrationMap::reference();
    for (t, v) in array.texels.iter().zip(two_m.ideal) {
        assert!((map.v_pk(t.r1).unwrap() - v).abs() < 1e-12);
    }
}
