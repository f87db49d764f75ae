//! Standalone SVG charts: horizontal bars, beeswarm, waterfall and line
//! plots. Output is plain text with fixed number formatting so identical
//! inputs give identical files.

use std::fmt::Write;

const WIDTH: f64 = 840.0;
const LEFT: f64 = 290.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const ROW: f64 = 22.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(height: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

/// Linear map from a data range onto pixel coordinates.
#[derive(Debug, Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, a, b }
    }

    fn at(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn x_axis(s: &mut String, scale: &Scale, y: f64, label: &str) {
    let _ = writeln!(
        s,
        r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#333"/>"##,
        scale.a, scale.b
    );
    for i in 0..=4 {
        let v = scale.lo + (scale.hi - scale.lo) * i as f64 / 4.0;
        let x = scale.at(v);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{y:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            y + 4.0,
            y + 17.0,
            tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (scale.a + scale.b) / 2.0,
        y + 34.0,
        escape(label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Horizontal bar chart, one bar per label, drawn in the given order.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64], x_label: &str) -> String {
    let height = TOP + ROW * labels.len() as f64 + 60.0;
    let mut s = header(height, title);
    let (lo, hi) = range(values.iter().copied().chain([0.0]));
    let scale = Scale::new(lo, hi, LEFT, WIDTH - RIGHT);
    let zero = scale.at(0.0);
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let y = TOP + ROW * i as f64;
        let (x0, x1) = (zero.min(scale.at(v)), zero.max(scale.at(v)));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><rect x="{x0:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{}</title></rect>"#,
            LEFT - 6.0,
            y + ROW * 0.65,
            escape(label),
            y + 3.0,
            x1 - x0,
            ROW - 6.0,
            if v >= 0.0 { PALETTE[0] } else { PALETTE[1] },
            tick(v)
        );
    }
    x_axis(&mut s, &scale, TOP + ROW * labels.len() as f64 + 4.0, x_label);
    s.push_str("</svg>\n");
    s
}

/// One beeswarm point: horizontal position and a colour value in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct SwarmPoint {
    pub x: f64,
    pub color: f64,
}

fn blue_red(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (30.0 + 200.0 * t).round() as u8;
    let b = (230.0 - 200.0 * t).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// Beeswarm plot: one row per feature, points jittered deterministically by
/// their position within the row.
pub fn beeswarm(title: &str, labels: &[String], rows: &[Vec<SwarmPoint>], x_label: &str) -> String {
    let height = TOP + ROW * labels.len() as f64 + 80.0;
    let mut s = header(height, title);
    let (lo, hi) = range(rows.iter().flatten().map(|p| p.x).chain([0.0]));
    let scale = Scale::new(lo, hi, LEFT, WIDTH - RIGHT);
    let zero = scale.at(0.0);
    let bottom = TOP + ROW * labels.len() as f64;
    let _ = writeln!(
        s,
        r##"<line x1="{zero:.1}" y1="{TOP:.1}" x2="{zero:.1}" y2="{bottom:.1}" stroke="#999" stroke-dasharray="3,3"/>"##
    );
    for (i, (label, points)) in labels.iter().zip(rows).enumerate() {
        let y = TOP + ROW * i as f64 + ROW / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            escape(label)
        );
        for (j, p) in points.iter().enumerate() {
            let jitter = ((j * 7919) % 11) as f64 - 5.0;
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{}" fill-opacity="0.8"/>"#,
                scale.at(p.x),
                y + jitter * 0.9,
                blue_red(p.color)
            );
        }
    }
    x_axis(&mut s, &scale, bottom + 4.0, x_label);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" fill="{}">low value</text><text x="{:.1}" y="{:.1}" fill="{}" text-anchor="end">high value</text>"#,
        LEFT,
        height - 8.0,
        blue_red(0.0),
        WIDTH - RIGHT,
        height - 8.0,
        blue_red(1.0)
    );
    s.push_str("</svg>\n");
    s
}

/// Waterfall from `base` through labelled signed steps to the final value.
pub fn waterfall(title: &str, base: f64, steps: &[(String, f64)], x_label: &str) -> String {
    let n = steps.len() + 2;
    let height = TOP + ROW * n as f64 + 60.0;
    let mut s = header(height, title);
    let mut cum = vec![base];
    for (_, d) in steps {
        cum.push(cum.last().unwrap() + d);
    }
    let end = *cum.last().unwrap();
    let scale = Scale::from_range(range(cum.iter().copied()));
    let marker = |s: &mut String, row: usize, label: &str, v: f64| {
        let y = TOP + ROW * row as f64;
        let x = scale.at(v);
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"##,
            LEFT - 6.0,
            y + ROW * 0.65,
            escape(label),
            y + 2.0,
            y + ROW - 2.0,
            x + 4.0,
            y + ROW * 0.65,
            tick(v)
        );
    };
    marker(&mut s, 0, "base value", base);
    for (i, (label, d)) in steps.iter().enumerate() {
        let y = TOP + ROW * (i + 1) as f64;
        let (a, b) = (scale.at(cum[i]), scale.at(cum[i + 1]));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"><title>{}</title></rect>"#,
            LEFT - 6.0,
            y + ROW * 0.65,
            escape(label),
            a.min(b),
            y + 3.0,
            (b - a).abs().max(0.5),
            ROW - 6.0,
            if *d >= 0.0 { PALETTE[1] } else { PALETTE[0] },
            tick(*d)
        );
    }
    marker(&mut s, n - 1, "prediction", end);
    x_axis(&mut s, &scale, TOP + ROW * n as f64 + 4.0, x_label);
    s.push_str("</svg>\n");
    s
}

impl Scale {
    fn from_range((lo, hi): (f64, f64)) -> Self {
        let pad = ((hi - lo) * 0.05).max(1e-6);
        Scale::new(lo - pad, hi + pad, LEFT, WIDTH - RIGHT)
    }
}

/// A named polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line chart with a legend. `diagonal` draws the chance line of ROC plots.
pub fn line_chart(title: &str, series: &[Series], x_label: &str, y_label: &str, diagonal: bool) -> String {
    let height = 480.0;
    let (plot_left, plot_bottom) = (70.0, height - 60.0);
    let mut s = header(height, title);
    let (xlo, xhi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (ylo, yhi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (xlo, xhi, ylo, yhi) = if diagonal {
        (0.0, 1.0, 0.0, 1.0)
    } else {
        (xlo, xhi, ylo, yhi)
    };
    let xs = Scale::new(xlo, xhi, plot_left, WIDTH - 170.0);
    let ys = Scale::new(ylo, yhi, plot_bottom, TOP);
    x_axis(&mut s, &xs, plot_bottom, x_label);
    let _ = writeln!(
        s,
        r##"<line x1="{plot_left:.1}" y1="{:.1}" x2="{plot_left:.1}" y2="{plot_bottom:.1}" stroke="#333"/>"##,
        TOP
    );
    for i in 0..=4 {
        let v = ys.lo + (ys.hi - ys.lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            plot_left - 6.0,
            ys.at(v) + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{}</text>"#,
        (TOP + plot_bottom) / 2.0,
        (TOP + plot_bottom) / 2.0,
        escape(y_label)
    );
    if diagonal {
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4,4"/>"##,
            xs.at(0.0),
            ys.at(0.0),
            xs.at(1.0),
            ys.at(1.0)
        );
    }
    for (k, line) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = line
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", xs.at(x), ys.at(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="{colour}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            WIDTH - 160.0,
            ly,
            WIDTH - 144.0,
            ly + 10.0,
            escape(&line.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
