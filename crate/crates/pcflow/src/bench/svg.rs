//! Minimal deterministic SVG line plots.
//!
//! Output is a fixed 720×480 canvas with linear axes, one polyline per
//! series, and an optional ±band polygon per series. Numbers are formatted
//! with fixed precision so a given input always renders byte-identical SVG.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// One plotted curve: points plus an optional `(x, low, high)` band.
#[derive(Clone, Debug, Default)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub band: Option<Vec<(f64, f64, f64)>>,
}

#[derive(Clone, Copy)]
struct Scale {
    min: f64,
    max: f64,
    lo_px: f64,
    hi_px: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        let span = (self.max - self.min).max(f64::MIN_POSITIVE);
        self.lo_px + (v - self.min) / span * (self.hi_px - self.lo_px)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    let formatted = format!("{v:.4}");
    let trimmed = formatted.trim_end_matches('0').trim_end_matches('.');
    if trimmed.is_empty() {
        "0".to_string()
    } else {
        trimmed.to_string()
    }
}

/// Renders a line plot. Returns the SVG document as a string.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
        if let Some(band) = &s.band {
            for &(x, lo, hi) in band {
                xs.push(x);
                ys.push(lo);
                ys.push(hi);
            }
        }
    }
    let (x_min, x_max) = span(&xs);
    let (y_min, y_max) = padded_span(&ys);
    let x_scale = Scale {
        min: x_min,
        max: x_max,
        lo_px: MARGIN_LEFT,
        hi_px: WIDTH - MARGIN_RIGHT,
    };
    let y_scale = Scale {
        min: y_min,
        max: y_max,
        lo_px: HEIGHT - MARGIN_BOTTOM,
        hi_px: MARGIN_TOP,
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"Helvetica, Arial, sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        fmt(WIDTH / 2.0),
        escape(title)
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(HEIGHT - MARGIN_BOTTOM),
        fmt(WIDTH - MARGIN_RIGHT)
    ));
    svg.push_str(&format!(
        "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(HEIGHT - MARGIN_BOTTOM),
        fmt(MARGIN_TOP)
    ));

    // Ticks: the distinct x values when few, else 5 evenly spaced.
    let mut x_ticks: Vec<f64> = xs.clone();
    x_ticks.sort_by(f64::total_cmp);
    x_ticks.dedup();
    if x_ticks.len() > 8 {
        x_ticks = (0..5)
            .map(|i| x_min + (x_max - x_min) * i as f64 / 4.0)
            .collect();
    }
    for t in &x_ticks {
        let px = x_scale.map(*t);
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n",
            fmt(px),
            fmt(HEIGHT - MARGIN_BOTTOM),
            fmt(HEIGHT - MARGIN_BOTTOM + 5.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            fmt(px),
            fmt(HEIGHT - MARGIN_BOTTOM + 18.0),
            tick_label(*t)
        ));
    }
    for i in 0..5 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let py = y_scale.map(v);
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n",
            fmt(MARGIN_LEFT - 5.0),
            fmt(py),
            fmt(MARGIN_LEFT)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(MARGIN_LEFT - 8.0),
            fmt(py + 4.0),
            tick_label(v)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        fmt((MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0),
        fmt(HEIGHT - 12.0),
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt(HEIGHT / 2.0),
        fmt(HEIGHT / 2.0),
        escape(y_label)
    ));

    // Bands first, curves on top.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if let Some(band) = &s.band {
            if band.len() >= 2 {
                let mut d = String::new();
                for &(x, _lo, hi) in band {
                    d.push_str(&format!("{},{} ", fmt(x_scale.map(x)), fmt(y_scale.map(hi))));
                }
                for &(x, lo, _hi) in band.iter().rev() {
                    d.push_str(&format!("{},{} ", fmt(x_scale.map(x)), fmt(y_scale.map(lo))));
                }
                svg.push_str(&format!(
                    "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
                    d.trim_end()
                ));
            }
        }
    }
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if s.points.len() >= 2 {
            let d: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(x_scale.map(x)), fmt(y_scale.map(y))))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                d.join(" ")
            ));
        } else if s.points.len() == 1 {
            let (x, y) = s.points[0];
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                fmt(x_scale.map(x)),
                fmt(y_scale.map(y))
            ));
        }
        // Legend entry.
        let ly = MARGIN_TOP + 16.0 * idx as f64 + 8.0;
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            fmt(WIDTH - MARGIN_RIGHT - 150.0),
            fmt(ly),
            fmt(WIDTH - MARGIN_RIGHT - 126.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(WIDTH - MARGIN_RIGHT - 120.0),
            fmt(ly + 4.0),
            escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn span(values: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            min = min.min(v);
            max = max.max(v);
        }
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        return (min - 0.5, max + 0.5);
    }
    (min, max)
}

fn padded_span(values: &[f64]) -> (f64, f64) {
    let (min, max) = span(values);
    let pad = (max - min) * 0.05;
    (min - pad, max + pad)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
