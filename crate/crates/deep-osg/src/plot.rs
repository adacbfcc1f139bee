//! Minimal self-contained SVG line plots. Two uses: the error-vs-time curve
//! and a two-coordinate rollout comparison. No external renderer, no styles
//! beyond a fixed palette; the CSV files remain the machine-readable output,
//! these are for eyeballs.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// One named polyline.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const M_LEFT: f64 = 78.0;
const M_RIGHT: f64 = 24.0;
const M_TOP: f64 = 44.0;
const M_BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Short decimal or scientific label for an axis tick.
fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.1e}")
    }
}

/// Writes a line plot of the series to `path`. With `log_y` the vertical
/// axis is logarithmic and every point must have y > 0.
pub fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_y: bool,
) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Empty("plot needs at least one point".into()));
    }
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "plot point ({x}, {y}) in series '{}'",
                    s.label
                )));
            }
            if log_y && y <= 0.0 {
                return Err(Error::Numeric(format!(
                    "log-scale plot needs positive values, got {y} in series '{}'",
                    s.label
                )));
            }
            xs.push(x);
            ys.push(if log_y { y.log10() } else { y });
        }
    }
    let (mut x0, mut x1) = bounds(&xs);
    let (mut y0, mut y1) = bounds(&ys);
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |v: f64| M_LEFT + (v - x0) / (x1 - x0) * (WIDTH - M_LEFT - M_RIGHT);
    let sy = |v: f64| HEIGHT - M_BOTTOM - (v - y0) / (y1 - y0) * (HEIGHT - M_TOP - M_BOTTOM);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    );
    let _ = write!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n");
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"26\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        (M_LEFT + WIDTH - M_RIGHT) / 2.0,
        esc(title)
    );

    // Grid lines and tick labels on five divisions per axis.
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let px = sx(fx);
        let py = sy(fy);
        let _ = write!(
            svg,
            "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" \
             stroke=\"#dddddd\"/>\n",
            M_TOP,
            HEIGHT - M_BOTTOM
        );
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
             stroke=\"#dddddd\"/>\n",
            M_LEFT,
            WIDTH - M_RIGHT
        );
        let _ = write!(
            svg,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            HEIGHT - M_BOTTOM + 18.0,
            fmt_num(fx)
        );
        let ylab = if log_y { format!("{:.1e}", 10f64.powf(fy)) } else { fmt_num(fy) };
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            M_LEFT - 8.0,
            py + 4.0,
            ylab
        );
    }
    let _ = write!(
        svg,
        "<rect x=\"{M_LEFT}\" y=\"{M_TOP}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"#333333\"/>\n",
        WIDTH - M_LEFT - M_RIGHT,
        HEIGHT - M_TOP - M_BOTTOM
    );
    let _ = write!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
        (M_LEFT + WIDTH - M_RIGHT) / 2.0,
        HEIGHT - 14.0,
        esc(x_label)
    );
    let _ = write!(
        svg,
        "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        (M_TOP + HEIGHT - M_BOTTOM) / 2.0,
        (M_TOP + HEIGHT - M_BOTTOM) / 2.0,
        esc(y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in &s.points {
            let yy = if log_y { y.log10() } else { y };
            let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(yy));
        }
        let _ = write!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\" \
             points=\"{}\"/>\n",
            pts.trim_end()
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            M_LEFT + 12.0,
            M_TOP + 18.0 + 17.0 * k as f64,
            esc(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_one_polyline_per_series_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.svg");
        let series = [
            Series { label: "first".into(), points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)] },
            Series { label: "second".into(), points: vec![(0.0, 2.0), (2.0, 1.0)] },
        ];
        line_plot(&path, "errors", "time", "error", &series, true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("<polyline").count(), 2);
        for needle in ["<svg", "errors", "time", "error", "first", "second", "</svg>"] {
            assert!(text.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn log_axis_rejects_nonpositive_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.svg");
        let series = [Series { label: "s".into(), points: vec![(0.0, 0.0)] }];
        let err = line_plot(&path, "t", "x", "y", &series, true).unwrap_err();
        assert!(err.to_string().contains("positive"), "was: {err}");
        assert!(line_plot(&path, "t", "x", "y", &series, false).is_ok());
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.svg");
        let series = [Series { label: "flat".into(), points: vec![(1.0, 3.0), (1.0, 3.0)] }];
        line_plot(&path, "flat", "x", "y", &series, false).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("polyline"));
    }
}
