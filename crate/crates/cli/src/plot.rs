//! SVG figures.

use std::path::Path;

use plotters::prelude::*;

type PlotResult = Result<(), Box<dyn std::error::Error>>;

fn class_color(class: Option<u8>) -> RGBColor {
    match class {
        Some(1) => RGBColor(200, 40, 40),
        Some(2) => RGBColor(30, 120, 200),
        Some(3) => RGBColor(40, 160, 60),
        _ => RGBColor(120, 120, 120),
    }
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let span = (hi - lo).abs().max(1e-12);
    (lo - 0.05 * span)..(hi + 0.05 * span)
}

/// Scatter of `(x, y, class, flagged)` points colored by class; `None` is
/// grey. Flagged points get an extra black ring.
pub fn scatter(
    path: &Path,
    title: &str,
    x_desc: &str,
    y_desc: &str,
    points: &[(f64, f64, Option<u8>, bool)],
) -> PlotResult {
    let (xmin, xmax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (ymin, ymax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    if !xmin.is_finite() || !ymin.is_finite() {
        return Err("nothing to plot".into());
    }
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(padded(xmin, xmax), padded(ymin, ymax))?;
    chart.configure_mesh().x_desc(x_desc).y_desc(y_desc).draw()?;
    chart.draw_series(
        points
            .iter()
            .map(|&(x, y, c, _)| Circle::new((x, y), 4, class_color(c).filled())),
    )?;
    chart.draw_series(
        points
            .iter()
            .filter(|p| p.3)
            .map(|&(x, y, _, _)| Circle::new((x, y), 8, BLACK.stroke_width(2))),
    )?;
    root.present()?;
    Ok(())
}

/// Resistance trace against sample index.
pub fn trace(path: &Path, title: &str, points: &[(f64, f64)]) -> PlotResult {
    let (xmin, xmax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (ymin, ymax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    if !xmin.is_finite() || !ymin.is_finite() {
        return Err("nothing to plot".into());
    }
    let root = SVGBackend::new(path, (900, 400)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(padded(xmin, xmax), padded(ymin, ymax))?;
    chart.configure_mesh().x_desc("input sample").y_desc("R (ohm)").draw()?;
    chart.draw_series(LineSeries::new(points.iter().copied(), &BLUE))?;
    root.present()?;
    Ok(())
}

/// One bar per labeled value, with optional reference markers.
pub fn bars(path: &Path, title: &str, y_desc: &str, bars: &[(String, f64, Option<u8>, Option<f64>)]) -> PlotResult {
    if bars.is_empty() {
        return Err("nothing to plot".into());
    }
    let ymax = bars
        .iter()
        .map(|b| b.1.max(b.3.unwrap_or(0.0)))
        .fold(0.0f64, f64::max)
        .max(1e-12)
        * 1.15;
    let n = bars.len();
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d((0..n).into_segmented(), 0f64..ymax)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| match x {
            SegmentValue::CenterOf(i) if *i < n => bars[*i].0.clone(),
            _ => String::new(),
        })
        .y_desc(y_desc)
        .draw()?;
    chart.draw_series(bars.iter().enumerate().map(|(i, b)| {
        let mut r = Rectangle::new(
            [(SegmentValue::Exact(i), 0.0), (SegmentValue::Exact(i + 1), b.1)],
            class_color(b.2).filled(),
        );
        r.set_margin(0, 0, 8, 8);
        r
    }))?;
    chart.draw_series(bars.iter().enumerate().filter_map(|(i, b)| {
        b.3.map(|m| Cross::new((SegmentValue::CenterOf(i), m), 6, BLACK.stroke_width(2)))
    }))?;
    root.present()?;
    Ok(())
}
