//! SVG figures: log-log RMSE curves and time-series overlays.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Result, SimError};

const SIZE: (u32, u32) = (900, 600);

fn plot_err<E: std::fmt::Debug>(e: E) -> SimError {
    SimError::Io(format!("plot: {e:?}"))
}

fn color(k: usize) -> RGBColor {
    const PALETTE: [RGBColor; 6] = [
        RGBColor(0, 0, 0),
        RGBColor(31, 119, 180),
        RGBColor(214, 39, 40),
        RGBColor(44, 160, 44),
        RGBColor(148, 103, 189),
        RGBColor(255, 127, 14),
    ];
    PALETTE[k % PALETTE.len()]
}

fn finite_range(values: impl Iterator<Item = f64>, positive: bool) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite() && (!positive || *v > 0.0))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    (lo <= hi).then_some((lo, hi))
}

/// Log-log line plot, one series per `(label, points)`. Non-positive values are skipped.
pub fn loglog_svg(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> Result<()> {
    let pts = || series.iter().flat_map(|s| s.1.iter());
    let (x0, x1) = finite_range(pts().map(|p| p.0), true).unwrap_or((1e-6, 1e-2));
    let (y0, y1) = finite_range(pts().map(|p| p.1), true).unwrap_or((1e-6, 1.0));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(70)
        .build_cartesian_2d((x0 * 0.9..x1 * 1.1).log_scale(), (y0 * 0.5..y1 * 2.0).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .x_label_formatter(&|v| format!("{v:.0e}"))
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(plot_err)?;
    for (k, (label, points)) in series.iter().enumerate() {
        let c = color(k);
        let data: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
        chart
            .draw_series(LineSeries::new(data.iter().copied(), c.stroke_width(2)))
            .map_err(plot_err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c.stroke_width(2)));
        chart
            .draw_series(data.iter().map(|&p| Circle::new(p, 3, c.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperLeft)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Time-series overlay with an annotation line under the title.
pub fn overlay_svg(path: &Path, title: &str, y_label: &str, series: &[(String, &[f64], &[f64])], note: &str) -> Result<()> {
    let (t0, t1) = finite_range(series.iter().flat_map(|s| s.1.iter().copied()), false).unwrap_or((0.0, 1.0));
    let (y0, y1) = finite_range(series.iter().flat_map(|s| s.2.iter().copied()), false).unwrap_or((0.0, 1.0));
    let pad = ((y1 - y0) * 0.05).max(1e-12 * y1.abs().max(1.0));
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{title} ({note})"), ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(80)
        .build_cartesian_2d(t0..t1.max(t0 + 1e-9), (y0 - pad)..(y1 + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("time (s)")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (k, (label, t, y)) in series.iter().enumerate() {
        let c = color(k);
        // thin out long records so files stay small
        let step = (t.len() / 20_000).max(1);
        let data = t.iter().zip(y.iter()).step_by(step).map(|(a, b)| (*a, *b));
        chart
            .draw_series(LineSeries::new(data, c.stroke_width(1)))
            .map_err(plot_err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_parseable_svg() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.svg");
        let s = vec![("m".to_string(), vec![(1e-5, 1e-3), (1e-4, 2e-3), (1e-3, 10.0)])];
        loglog_svg(&p, "t", "dt (s)", "RMSE", &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));
        let q = dir.path().join("b.svg");
        let t = [0.0, 1.0, 2.0];
        overlay_svg(&q, "x", "y", &[("a".into(), &t, &[1.0, 2.0, 3.0])], "RMSE 0").unwrap();
        assert!(std::fs::read_to_string(&q).unwrap().contains("</svg>"));
    }
}
