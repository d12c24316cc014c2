//! Acceptance gate. Every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line; the process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use memspike::config::{ClassifierKind, Experiment, ExperimentConfig, TexelInputs};
use memspike::sorting::run_sorter;
use memspike::texel_run::run_texel;
use memspike_core::device::{DeviceParams, DeviceState};
use memspike_core::reference::{
    TEMPLATE_R_BEFORE, TEMPLATE_V_PK, TEXEL_ROWS, TRIPLET_FROM_START_MEAN_PERCENT, TRIPLET_FROM_START_PERCENT,
    TRIPLET_READS, TRIPLET_SETTLED_MEAN_PERCENT, TRIPLET_SETTLED_PERCENT,
};
use memspike_core::signal::SpikeClass;
use memspike_core::sorter::{batch_summaries, features, ReadSchedule, ReadTrace, WindowKind};
use memspike_core::texel::{
    charge_ratio, round_input, round_inputs, trigger_sample, Bump, CalibrationMap, TexelArray, TexelParams,
    TriggerSampler,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let sched = ReadSchedule::default();
    let trace = ReadTrace::from_batches(&TRIPLET_READS, &sched).map_err(|e| e.to_string())?;
    let summaries = batch_summaries(&trace).map_err(|e| e.to_string())?;
    let mut worst = (0.0f64, String::new());
    let mut failures = 0;
    let mut total = 0;
    let mut compare = |got: f64, want_percent: f64, what: String| {
        let e = rel(got, want_percent * 1e-2);
        total += 1;
        if e > 1e-6 {
            failures += 1;
        }
        if e > worst.0 {
            worst = (e, what);
        }
    };
    for (b, s) in summaries.iter().enumerate() {
        for k in 0..3 {
            compare(s.settled[k], TRIPLET_SETTLED_PERCENT[b][k], format!("batch {} ({}-2)", b + 1, k + 10));
            compare(s.from_start[k], TRIPLET_FROM_START_PERCENT[b][k], format!("batch {} ({}-1)", b + 1, k + 10));
        }
        compare(s.settled_mean, TRIPLET_SETTLED_MEAN_PERCENT[b], format!("batch {} mean (x-2)", b + 1));
        compare(s.from_start_mean, TRIPLET_FROM_START_MEAN_PERCENT[b], format!("batch {} mean (x-1)", b + 1));
    }
    let elapsed = t.elapsed();
    check(
        failures == 0 && within(elapsed, 1.0),
        format!(
            "{}/{total} values within 1e-6 relative; worst {:.3e} at {}; {:.3} s",
            total - failures,
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

fn noiseless_cfg(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: Some(seed),
        ..Default::default()
    };
    cfg.device.sigma_cycle = 0.0;
    cfg.device.sigma_read = 0.0;
    cfg
}

fn class_mean(run: &memspike::sorting::SorterRun, class: SpikeClass) -> f64 {
    let v: Vec<f64> = run
        .event_points()
        .filter(|p| p.truth == Some(class))
        .map(|p| p.frac_change)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let mut cfg = noiseless_cfg(1);
    cfg.sorter.calibrate_k_neg = true;
    let run = run_sorter(&cfg, Experiment::Repeatability, 1).map_err(|e| e.to_string())?;
    let [m1, m2, m3] = [SpikeClass::One, SpikeClass::Two, SpikeClass::Three].map(|c| class_mean(&run, c));
    let ordered = m1 > m2 && m2 > m3;
    let band2 = rel(m2, 2.810e-2) <= 0.5;
    let band3 = rel(m3, 0.840e-2) <= 0.5;
    let elapsed = t.elapsed();
    check(
        ordered && band2 && band3 && within(elapsed, 10.0),
        format!(
            "k_neg {:.4e}; means I {:.4e}, II {:.4e} ({:+.1}%), III {:.4e} ({:+.1}%); {:.2} s",
            run.device.k_neg,
            m1,
            m2,
            100.0 * (m2 / 2.810e-2 - 1.0),
            m3,
            100.0 * (m3 / 0.840e-2 - 1.0),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_3() -> Outcome {
    let noiseless = run_sorter(&noiseless_cfg(3), Experiment::Repeatability, 3).map_err(|e| e.to_string())?;
    let exact = noiseless.raster.confusion.map_or(0, |c| c.correct());
    let mut scores = Vec::new();
    let mut cvs = Vec::new();
    for seed in 0..20u64 {
        let mut cfg = ExperimentConfig {
            seed: Some(seed),
            ..Default::default()
        };
        cfg.sorter.classifier = ClassifierKind::Plane;
        let run = run_sorter(&cfg, Experiment::Repeatability, seed).map_err(|e| e.to_string())?;
        scores.push(run.raster.confusion.map_or(0, |c| c.correct()));
        cvs.push(run.mean_cv());
    }
    scores.sort_unstable();
    cvs.sort_by(f64::total_cmp);
    let median = (scores[9] + scores[10]) as f64 / 2.0;
    let cv = 0.5 * (cvs[9] + cvs[10]);
    check(
        exact == 30 && median >= 27.0 && (0.07..=0.13).contains(&cv),
        format!(
            "noiseless {exact}/30; variable median {median}/30 (min {}) at median cluster CV {:.1}%",
            scores[0],
            100.0 * cv
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut matched = 0;
    let mut total = 0;
    let mut misses = Vec::new();
    for row in &TEXEL_ROWS {
        for ((got, want), ideal) in round_inputs(&row.ideal).iter().zip(row.rounded).zip(row.ideal) {
            total += 1;
            if *got == want {
                matched += 1;
            } else {
                misses.push(format!("{}{} {ideal} -> {got} (table {want})", row.class, row.variant));
            }
        }
    }
    check(
        matched == 36 && total == 36,
        format!("{matched}/{total} rounded values exact; mismatches: [{}]", misses.join(", ")),
    )
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let mut cfg = ExperimentConfig {
        seed: Some(0),
        ..Default::default()
    };
    cfg.texel.inputs = TexelInputs::Reference;
    cfg.texel.fit = true;
    let run = run_texel(&cfg, 0).map_err(|e| e.to_string())?;
    let fit = run.fit.ok_or("no fit")?;
    let v = |label: &str| {
        run.rows
            .iter()
            .find(|r| r.label.split('/').any(|l| l == label))
            .map(|r| r.v_out)
            .unwrap_or(f64::NAN)
    };
    let class_rows = |c: u8| run.rows.iter().filter(move |r| r.classes.first() == Some(&c));
    let min2 = class_rows(2).map(|r| r.v_out).fold(f64::INFINITY, f64::min);
    let max13 = class_rows(1).chain(class_rows(3)).map(|r| r.v_out).fold(f64::NEG_INFINITY, f64::max);
    let a = min2 > max13;
    let b = v("2L") > v("1M") && v("1M") > v("1L") && v("3L") > v("3M") && v("3M") > v("3H");
    let mut sorted: Vec<f64> = run.rows.iter().map(|r| r.v_out).collect();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let top2 = [v("2M"), v("2H")];
    let c = top2.iter().all(|x| *x >= sorted[1]) && sorted[1] > sorted[2];
    let rms_ok = fit.rms <= 0.15;
    let elapsed = t.elapsed();
    check(
        a && b && c && rms_ok && within(elapsed, 5.0),
        format!(
            "(a) {a} (b) {b} (c) {c}; fit rms {:.4} V over {} outputs; bump w_below {:.4} w_above {:.4} i_peak {:.3e}; {:.2} s",
            fit.rms,
            run.rows.iter().filter(|r| r.measured.is_some()).count(),
            fit.bump.w_below,
            fit.bump.w_above,
            fit.bump.i_peak,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Outcome {
    let map = CalibrationMap::reference();
    let max_res = TEMPLATE_R_BEFORE
        .iter()
        .zip(TEMPLATE_V_PK)
        .map(|(&r, v)| (map.v_pk(r).unwrap() - v).abs())
        .fold(0.0, f64::max);
    let params = TexelParams::default();
    let mut array = TexelArray::blank(4, &params).map_err(|e| e.to_string())?;
    array.program(&TEMPLATE_V_PK, &params).map_err(|e| e.to_string())?;
    let stored = array.stored(&params).map_err(|e| e.to_string())?;
    let worst = stored
        .iter()
        .zip(TEMPLATE_V_PK)
        .map(|(s, t)| rel(*s, t))
        .fold(0.0, f64::max);
    check(
        max_res <= 5e-3 && worst <= 1e-9,
        format!(
            "slope {:.4e} V/ohm, intercept {:.5} V; max residual {:.2} mV; round trip {:.1e} relative",
            map.slope,
            map.intercept,
            max_res * 1e3,
            worst
        ),
    )
}

fn criterion_7() -> Outcome {
    let ratio = charge_ratio(46e-15, 1.25e-15).map_err(|e| e.to_string())?;
    let report = memspike::charge::run_charge(&Default::default()).map_err(|e| e.to_string())?;
    let noted = report.note.contains("39") && report.note.contains("37");
    check(
        (ratio - 36.8).abs() <= 0.01 && noted,
        format!("ratio {ratio:.4}; quoted {:?}; note present: {noted}", report.quoted_toggles),
    )
}

fn criterion_8() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 512,
        failure_persistence: None,
        ..Config::default()
    });
    let v_trig = 0.72;
    let result = runner.run(&(0usize..89, 101usize..160), |(c, len)| {
        // Below threshold up to c, then a plateau above it: one crossing.
        let inst: Vec<f64> = (0..len).map(|i| if i < c { 0.66 } else { 0.8 }).collect();
        let w = trigger_sample(&inst, &TriggerSampler::new(v_trig)).unwrap();
        prop_assert_eq!(w.crossing, c);
        prop_assert_eq!(w.indices, vec![c + 7, c + 8, c + 9, c + 10]);
        Ok(())
    });
    check(result.is_ok(), format!("512 random crossings: {result:?}"))
}

fn device_sequences() -> Result<(), String> {
    let params = DeviceParams {
        sigma_cycle: 0.3,
        ..DeviceParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..10_000u64 {
        let r0 = rng.random_range(params.r_min..=params.r_max);
        let mut dev = DeviceState::new(r0, case, &params).map_err(|e| e.to_string())?;
        let n = rng.random_range(1..40);
        let mut quiet = true;
        for _ in 0..n {
            let v = rng.random_range(-6.0..6.0);
            let dt = 10f64.powf(rng.random_range(-7.0..-2.0));
            let before = dev.resistance();
            dev.apply_sample(v, dt, &params).map_err(|e| e.to_string())?;
            let after = dev.resistance();
            if !(params.r_min..=params.r_max).contains(&after) {
                return Err(format!("case {case}: r = {after} left the bounds"));
            }
            if v > params.v_th_neg && v < params.v_th_pos && after != before {
                return Err(format!("case {case}: dead-zone input {v} moved r"));
            }
            quiet &= v > params.v_th_neg && v < params.v_th_pos;
        }
        if quiet && dev.resistance() != r0 {
            return Err(format!("case {case}: sub-threshold sequence changed r"));
        }
    }
    Ok(())
}

fn batch_products() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sched = ReadSchedule::default();
    for _ in 0..200 {
        let batches: Vec<[f64; 12]> = (0..4)
            .map(|_| std::array::from_fn(|_| rng.random_range(5e3..20e3)))
            .collect();
        let trace = ReadTrace::from_batches(&batches, &sched).map_err(|e| e.to_string())?;
        let pts = features(&trace).map_err(|e| e.to_string())?;
        let per_batch = sched.reads_per_batch();
        for (b, row) in batches.iter().enumerate() {
            // pairs whose final read lies inside batch b
            let lo = b * per_batch;
            let prod: f64 = pts[lo..lo + per_batch - 1]
                .iter()
                .map(|p| 1.0 + p.frac_change)
                .product();
            let want = row[per_batch - 1] / row[0];
            if rel(prod, want) > 1e-12 {
                return Err(format!("batch product {prod} vs {want}"));
            }
        }
        if pts.iter().any(|p| p.kind == WindowKind::Reset) {
            return Err("tabulated trace has no resets".into());
        }
    }
    Ok(())
}

fn texel_unimodal() -> Result<(), String> {
    let bumps = [
        memspike_core::texel::REFERENCE_BUMP,
        Bump {
            i_peak: 1e-6,
            w_below: 0.05,
            w_above: 0.005,
        },
    ];
    for bump in bumps {
        for v_pk in [0.69, 0.7094, 0.7347, 0.74] {
            let grid: Vec<f64> = (0..=1300).map(|mv| bump.current(mv as f64 * 1e-3, v_pk)).collect();
            let peak = grid
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            if grid[..=peak].windows(2).any(|w| w[1] < w[0]) || grid[peak..].windows(2).any(|w| w[1] > w[0]) {
                return Err(format!("bump not unimodal for v_pk {v_pk}"));
            }
            if (peak as f64 * 1e-3 - v_pk).abs() > 1e-3 {
                return Err(format!("peak at {peak} mV, stored {v_pk}"));
            }
        }
    }
    Ok(())
}

fn rounding_idempotent() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let v: f64 = rng.random_range(0.0..1.3);
        let once = round_input(v);
        if round_input(once) != once {
            return Err(format!("round({v}) not idempotent"));
        }
    }
    Ok(())
}

fn seeded_determinism() -> Result<(), String> {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    for exp in [Experiment::Repeatability, Experiment::Randomized, Experiment::Texel, Experiment::Charge] {
        let cfg = ExperimentConfig {
            seed: Some(17),
            ..Default::default()
        };
        let da = a.path().join(exp.name());
        let db = b.path().join(exp.name());
        let ra = memspike::run(exp, &cfg, &da).map_err(|e| e.to_string())?;
        memspike::run(exp, &cfg, &db).map_err(|e| e.to_string())?;
        for f in &ra.artifacts {
            let x = std::fs::read(da.join(f)).map_err(|e| e.to_string())?;
            let y = std::fs::read(db.join(f)).map_err(|e| e.to_string())?;
            if x != y {
                return Err(format!("{}/{f} differs between identical runs", exp.name()));
            }
        }
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let suites: [(&str, fn() -> Result<(), String>); 5] = [
        ("device bounds and dead zone (1e4 sequences)", device_sequences),
        ("batch product identity", batch_products),
        ("texel unimodality on 1 mV grid", texel_unimodal),
        ("rounding idempotence", rounding_idempotent),
        ("seeded bit-determinism", seeded_determinism),
    ];
    let mut failed = Vec::new();
    for (name, f) in suites {
        if let Err(e) = f() {
            failed.push(format!("{name}: {e}"));
        }
    }
    check(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} suites pass", suites.len())
        } else {
            failed.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("fractional-change arithmetic oracle", criterion_1),
        ("device calibration closure", criterion_2),
        ("repeatability separability", criterion_3),
        ("rounding oracle", criterion_4),
        ("texel ranking", criterion_5),
        ("calibration map", criterion_6),
        ("charge budget", criterion_7),
        ("trigger sampler determinism", criterion_8),
        ("invariant suites", criterion_9),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(msg) => println!("PASS  criterion {}: {name} -- {msg}", i + 1),
            Err(msg) => {
                failures += 1;
                println!("FAIL  criterion {}: {name} -- {msg}", i + 1)
            }
        }
    }
    println!("{}/{} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
