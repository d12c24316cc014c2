//! Writes run artifacts. Tables and the report are written before any
//! figure, and a failed figure only adds a warning.

use std::fs;
use std::path::{Path, PathBuf};

use memspike_core::signal::SegmentKind;
use memspike_core::sorter::WindowKind;
use serde::Serialize;

use crate::charge::ChargeReport;
use crate::config::{Experiment, ExperimentConfig};
use crate::plot;
use crate::sorting::SorterRun;
use crate::texel_run::TexelRun;
use crate::RunError;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: Experiment,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub summary: serde_json::Value,
    /// File names relative to the output directory.
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    artifacts: Vec<String>,
    warnings: Vec<String>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Output(format!("{}: {e}", path.display()))
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        for r in rows {
            w.serialize(r).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| io_err(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn figure(&mut self, name: &str, draw: impl FnOnce(&Path) -> Result<(), Box<dyn std::error::Error>>) {
        let path = self.dir.join(name);
        match draw(&path) {
            Ok(()) => self.artifacts.push(name.into()),
            Err(e) => {
                let _ = fs::remove_file(&path);
                self.warnings.push(format!("figure {name} not written: {e}"));
            }
        }
    }

    fn finish(
        mut self,
        experiment: Experiment,
        seed: u64,
        cfg: &ExperimentConfig,
        summary: serde_json::Value,
    ) -> Result<RunReport, RunError> {
        self.artifacts.push("report.json".into());
        let report = RunReport {
            experiment,
            seed,
            config: cfg.clone(),
            summary,
            artifacts: self.artifacts.clone(),
            warnings: self.warnings.clone(),
        };
        let path = self.dir.join("report.json");
        let text = serde_json::to_string_pretty(&report).map_err(|e| io_err(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(report)
    }
}

fn kind_name(k: WindowKind) -> &'static str {
    match k {
        WindowKind::Event => "event",
        WindowKind::Noise => "noise",
        WindowKind::Reset => "reset",
    }
}

#[derive(Serialize)]
struct ReadRow {
    index: usize,
    batch: usize,
    kind: &'static str,
    r: f64,
    after_reset: bool,
}

#[derive(Serialize)]
struct BinRow {
    index: usize,
    kind: &'static str,
    truth: Option<u8>,
    r_initial: f64,
    frac_change: f64,
}

#[derive(Serialize)]
struct SegmentRow {
    segment: usize,
    triplet: usize,
    start: usize,
    kind: &'static str,
    truth: Option<u8>,
    r_initial: f64,
    frac_change: f64,
    detected: bool,
    predicted: Option<u8>,
    outlier: bool,
    planted: bool,
}

#[derive(Serialize)]
struct RasterRow {
    index: usize,
    truth: Option<u8>,
    predicted: u8,
    outlier: bool,
}

#[derive(Serialize)]
struct BatchRow {
    batch: usize,
    r_initial: f64,
    settled_1: f64,
    settled_2: f64,
    settled_3: f64,
    settled_mean: f64,
    from_start_1: f64,
    from_start_2: f64,
    from_start_3: f64,
    from_start_mean: f64,
}

pub fn write_sorter(
    dir: &Path,
    experiment: Experiment,
    seed: u64,
    cfg: &ExperimentConfig,
    run: &SorterRun,
) -> Result<RunReport, RunError> {
    let mut w = Writer::new(dir)?;

    let reads: Vec<ReadRow> = run
        .trace
        .reads
        .iter()
        .map(|r| ReadRow {
            index: r.index,
            batch: r.batch,
            kind: match r.kind {
                memspike_core::sorter::ReadKind::BatchStart => "start",
                memspike_core::sorter::ReadKind::Bin => "bin",
                memspike_core::sorter::ReadKind::Noise => "noise",
            },
            r: r.r,
            after_reset: r.after_reset,
        })
        .collect();
    w.csv("reads.csv", &reads)?;

    let bins: Vec<BinRow> = run
        .bin_points
        .iter()
        .map(|p| BinRow {
            index: p.index,
            kind: kind_name(p.kind),
            truth: p.truth.map(|c| c.id()),
            r_initial: p.r_initial,
            frac_change: p.frac_change,
        })
        .collect();
    w.csv("bin_features.csv", &bins)?;

    let mut labels = run.raster.entries.iter();
    let segments: Vec<SegmentRow> = run
        .segment_points
        .iter()
        .zip(&run.stream.segments)
        .enumerate()
        .map(|(i, (p, seg))| {
            let label = if p.kind == WindowKind::Event { labels.next().map(|e| e.label) } else { None };
            SegmentRow {
                segment: i,
                triplet: seg.triplet,
                start: seg.start,
                kind: match seg.kind {
                    SegmentKind::Background => "background",
                    SegmentKind::Spike(_) => "spike",
                },
                truth: p.truth.map(|c| c.id()),
                r_initial: p.r_initial,
                frac_change: p.frac_change,
                detected: run.detected[i],
                predicted: label.and_then(|l| l.class).map(|c| c.id()),
                outlier: label.is_some_and(|l| l.outlier),
                planted: run.double_spike == Some(i),
            }
        })
        .collect();
    w.csv("features.csv", &segments)?;

    let raster: Vec<RasterRow> = run
        .raster
        .entries
        .iter()
        .filter_map(|e| {
            e.label.class.map(|c| RasterRow {
                index: e.index,
                truth: e.truth.map(|t| t.id()),
                predicted: c.id(),
                outlier: e.label.outlier,
            })
        })
        .collect();
    w.csv("raster.csv", &raster)?;

    let batches: Vec<BatchRow> = run
        .batches
        .iter()
        .map(|b| BatchRow {
            batch: b.batch,
            r_initial: b.r_initial,
            settled_1: b.settled[0],
            settled_2: b.settled[1],
            settled_3: b.settled[2],
            settled_mean: b.settled_mean,
            from_start_1: b.from_start[0],
            from_start_2: b.from_start[1],
            from_start_3: b.from_start[2],
            from_start_mean: b.from_start_mean,
        })
        .collect();
    w.csv("batches.csv", &batches)?;

    if let Some(c) = &run.raster.confusion {
        w.json("confusion.json", c)?;
    }

    let correct = run.raster.confusion.map(|c| c.correct());
    let events = run.event_points().count();
    let false_alarms = run
        .noise_points()
        .filter(|p| p.frac_change > run.noise.theta)
        .count();
    let double = run.double_spike.map(|i| {
        let p = &run.segment_points[i];
        let top = run
            .clusters
            .iter()
            .find(|c| c.class == memspike_core::signal::SpikeClass::One)
            .map_or(f64::NAN, |c| c.centroid_frac);
        serde_json::json!({
            "segment": i,
            "frac_change": p.frac_change,
            "ratio_to_class_one_centroid": p.frac_change / top,
            "flagged": segments[i].outlier,
        })
    });
    let summary = serde_json::json!({
        "k_neg": run.device.k_neg,
        "calibrated_k_neg": run.calibrated_k_neg,
        "noise": run.noise,
        "events": events,
        "noise_windows": run.noise_points().count(),
        "correct": correct,
        "noise_false_alarms": false_alarms,
        "clusters": run.clusters,
        "mean_cv": run.mean_cv(),
        "separation_margin": run.separation_margin,
        "outliers": run.raster.outliers().count(),
        "double_spike": double,
    });

    let pts: Vec<(f64, f64, Option<u8>, bool)> = segments
        .iter()
        .filter(|s| s.kind == "spike" || s.truth.is_none())
        .map(|s| (s.r_initial, s.frac_change, s.truth, s.outlier))
        .collect();
    w.figure("features.svg", |p| {
        plot::scatter(p, "Segment features", "R initial (ohm)", "fractional change", &pts)
    });
    let tr: Vec<(f64, f64)> = run.trace.reads.iter().map(|r| (r.index as f64, r.r)).collect();
    w.figure("reads.svg", |p| plot::trace(p, "Device reads", &tr));

    w.finish(experiment, seed, cfg, summary)
}

#[derive(Serialize)]
struct TexelCsvRow {
    label: String,
    ideal_1: f64,
    ideal_2: f64,
    ideal_3: f64,
    ideal_4: f64,
    rounded_1: f64,
    rounded_2: f64,
    rounded_3: f64,
    rounded_4: f64,
    v_out: f64,
    measured_run1: Option<f64>,
    measured_run2: Option<f64>,
}

fn at(v: &[f64], i: usize) -> f64 {
    v.get(i).copied().unwrap_or(f64::NAN)
}

pub fn write_texel(dir: &Path, seed: u64, cfg: &ExperimentConfig, run: &TexelRun) -> Result<RunReport, RunError> {
    let mut w = Writer::new(dir)?;
    let rows: Vec<TexelCsvRow> = run
        .rows
        .iter()
        .map(|r| TexelCsvRow {
            label: r.label.clone(),
            ideal_1: at(&r.v_ideal, 0),
            ideal_2: at(&r.v_ideal, 1),
            ideal_3: at(&r.v_ideal, 2),
            ideal_4: at(&r.v_ideal, 3),
            rounded_1: at(&r.v_rounded, 0),
            rounded_2: at(&r.v_rounded, 1),
            rounded_3: at(&r.v_rounded, 2),
            rounded_4: at(&r.v_rounded, 3),
            v_out: r.v_out,
            measured_run1: r.measured.map(|m| m[0]),
            measured_run2: r.measured.map(|m| m[1]),
        })
        .collect();
    w.csv("texel_outputs.csv", &rows)?;
    let summary = serde_json::to_value(run).map_err(|e| RunError::Output(e.to_string()))?;
    let bars: Vec<(String, f64, Option<u8>, Option<f64>)> = run
        .rows
        .iter()
        .map(|r| (r.label.clone(), r.v_out, r.classes.first().copied(), r.measured.map(|m| m[0])))
        .collect();
    w.figure("texel_outputs.svg", |p| plot::bars(p, "Texel array output", "V out (V)", &bars));
    w.finish(Experiment::Texel, seed, cfg, summary)
}

#[derive(Serialize)]
struct ChargeRow {
    q_texel: f64,
    q_inverter: f64,
    ratio: f64,
    quoted_toggles_a: f64,
    quoted_toggles_b: f64,
}

pub fn write_charge(dir: &Path, seed: u64, cfg: &ExperimentConfig, rep: &ChargeReport) -> Result<RunReport, RunError> {
    let mut w = Writer::new(dir)?;
    let row = ChargeRow {
        q_texel: rep.q_texel,
        q_inverter: rep.q_inverter,
        ratio: rep.ratio,
        quoted_toggles_a: rep.quoted_toggles[0],
        quoted_toggles_b: rep.quoted_toggles[1],
    };
    w.csv("charge.csv", &[row])?;
    let summary = serde_json::to_value(rep).map_err(|e| RunError::Output(e.to_string()))?;
    let bars = vec![
        ("ratio".to_string(), rep.ratio, Some(2), None),
        ("quoted A".to_string(), rep.quoted_toggles[0], None, None),
        ("quoted B".to_string(), rep.quoted_toggles[1], None, None),
    ];
    w.figure("charge.svg", |p| plot::bars(p, "Texel charge in inverter toggles", "toggles", &bars));
    w.finish(Experiment::Charge, seed, cfg, summary)
}
