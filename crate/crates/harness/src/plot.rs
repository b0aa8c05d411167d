//! Static SVG line charts of a sweep.

use std::path::{Path, PathBuf};

use irsfd::baselines::SchemeId;
use plotters::prelude::*;

use crate::config::SweepKind;
use crate::error::{HarnessError, Result};
use crate::experiment::SweepResult;
use crate::output::SWEEP_SVG;

pub const ANALYTICAL_SERIES: &str = "analytical";

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, mean, half-width of the error bar)`, sorted by `x`.
    pub points: Vec<(f64, f64, f64)>,
}

fn x_of(kind: SweepKind, rho: f64, snr_db: f64) -> f64 {
    match kind {
        SweepKind::Rho => rho,
        SweepKind::Snr => snr_db,
    }
}

fn usable(kind: SweepKind, x: f64, y: f64) -> bool {
    x.is_finite() && y.is_finite() && (kind == SweepKind::Snr || x > 0.0)
}

/// One series per scheme with error bars `2·stderr`, plus the analytical
/// bound of the proposed scheme when it was run. Series with no plottable
/// point are dropped with a warning.
pub fn build_series(result: &SweepResult) -> Vec<Series> {
    let kind = result.sweep_kind;
    let mut names: Vec<String> = Vec::new();
    for r in &result.rows {
        if !names.contains(&r.scheme) {
            names.push(r.scheme.clone());
        }
    }
    let proposed = SchemeId::PROPOSED.label();
    let mut series = Vec::new();
    for name in &names {
        let rows = result.rows.iter().filter(|r| &r.scheme == name);
        series.push(Series {
            name: name.clone(),
            points: rows
                .clone()
                .map(|r| (x_of(kind, r.rho, r.snr_db), r.wsr_mean, 2.0 * r.wsr_stderr))
                .collect(),
        });
        if *name == proposed {
            series.push(Series {
                name: ANALYTICAL_SERIES.to_string(),
                points: rows
                    .map(|r| (x_of(kind, r.rho, r.snr_db), r.analytical_mean, 0.0))
                    .collect(),
            });
        }
    }
    series
        .into_iter()
        .filter_map(|mut s| {
            s.points.retain(|&(x, y, _)| usable(kind, x, y));
            s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
            if s.points.is_empty() {
                log::warn!("series '{}' has no plottable points; omitted", s.name);
                None
            } else {
                Some(s)
            }
        })
        .collect()
}

fn bounds(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|s| &s.points);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y, e) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y - e);
        y1 = y1.max(y + e);
    }
    let y1 = if y1 > y0 { y1 + 0.08 * (y1 - y0) } else { y0 + 1.0 };
    ((x0, x1), (y0, y1))
}

fn draw_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Config(format!("rendering chart: {e}"))
}

macro_rules! draw_chart {
    ($root:expr, $series:expr, $x_range:expr, $y_range:expr, $x_desc:expr) => {{
        let mut chart = ChartBuilder::on($root)
            .margin(16)
            .x_label_area_size(40)
            .y_label_area_size(56)
            .build_cartesian_2d($x_range, $y_range)
            .map_err(draw_err)?;
        chart
            .configure_mesh()
            .x_desc($x_desc)
            .y_desc("WSR [bits/s/Hz]")
            .draw()
            .map_err(draw_err)?;
        for (i, s) in $series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            if s.points.len() > 1 {
                chart
                    .draw_series(LineSeries::new(s.points.iter().map(|&(x, y, _)| (x, y)), color.stroke_width(2)))
                    .map_err(draw_err)?;
            }
            chart
                .draw_series(s.points.iter().filter(|p| p.2 > 0.0).map(|&(x, y, e)| {
                    ErrorBar::new_vertical(x, y - e, y, y + e, color.stroke_width(1), 6)
                }))
                .map_err(draw_err)?;
            chart
                .draw_series(s.points.iter().map(|&(x, y, _)| Circle::new((x, y), 4, color.filled())))
                .map_err(draw_err)?
                .label(s.name.as_str())
                .legend(move |(x, y)| Rectangle::new([(x, y - 4), (x + 12, y + 4)], color.filled()));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .position(SeriesLabelPosition::LowerRight)
            .draw()
            .map_err(draw_err)?;
    }};
}

/// Renders the chart to an SVG document.
pub fn render_svg(result: &SweepResult) -> Result<String> {
    let series = build_series(result);
    if series.is_empty() {
        return Err(HarnessError::Config("nothing to plot: every series is empty".into()));
    }
    let ((x0, x1), (y0, y1)) = bounds(&series);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 560)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        match result.sweep_kind {
            SweepKind::Rho => {
                let x_range = (x0 / 2.0..x1 * 2.0).log_scale();
                draw_chart!(&root, series, x_range, y0..y1, "error scale rho");
            }
            SweepKind::Snr => {
                let pad = ((x1 - x0) * 0.05).max(1.0);
                draw_chart!(&root, series, x0 - pad..x1 + pad, y0..y1, "transmit SNR [dB]");
            }
        }
        root.present().map_err(draw_err)?;
    }
    Ok(svg)
}

/// Writes `sweep.svg` under `dir`.
pub fn emit_plots(result: &SweepResult, dir: &Path) -> Result<PathBuf> {
    let svg = render_svg(result)?;
    let path = dir.join(SWEEP_SVG);
    std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}
