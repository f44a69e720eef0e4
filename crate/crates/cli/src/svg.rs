//! Bare-bones SVG plots: polylines on axes, and a label raster for cell maps.
//! Coordinates are printed with fixed precision so output is stable.

use std::fmt::Write;

use neurochan_core::quantize::CellMap;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 50.0;

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for &(x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            return Frame {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        if f.x1 - f.x0 < 1e-12 {
            f.x0 -= 0.5;
            f.x1 += 0.5;
        }
        if f.y1 - f.y0 < 1e-12 {
            f.y0 -= 0.5;
            f.y1 += 0.5;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.0}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r) = (MARGIN, WIDTH - MARGIN);
    let (t, b) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#
    );
    for (v, x) in [(f.x0, l), (f.x1, r)] {
        let _ = writeln!(
            out,
            r#"<text x="{x:.0}" y="{:.0}" text-anchor="middle">{}</text>"#,
            b + 16.0,
            tick(v)
        );
    }
    for (v, y) in [(f.y0, b), (f.y1, t)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.0}" y="{y:.0}" text-anchor="end">{}</text>"#,
            l - 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.0}" y="{:.0}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.0}" text-anchor="middle" transform="rotate(-90 14 {:.0})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn polyline(out: &mut String, f: &Frame, points: &[(f64, f64)], color: &str) {
    let mut d = String::new();
    for &(x, y) in points
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
    {
        let _ = write!(d, "{:.2},{:.2} ", f.px(x), f.py(y));
    }
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
        d.trim_end()
    );
}

/// Line chart with one polyline per series and a legend.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let f = Frame::fit(series.iter().flat_map(|s| s.points.iter()));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut out, &f, &s.points, color);
        let _ = writeln!(
            out,
            r#"<text x="{:.0}" y="{:.0}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            MARGIN + 14.0 * i as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One rectangle per grid node coloured by label, with an optional path
/// drawn on top.
pub fn cell_raster(title: &str, map: &CellMap, path: Option<&[(f64, f64)]>) -> String {
    let g = map.grid;
    let f = Frame {
        x0: g.x_min,
        x1: g.x_max,
        y0: g.y_min,
        y1: g.y_max,
    };
    let labels = map.distinct_labels();
    let r = g.resolution;
    let cw = (WIDTH - 2.0 * MARGIN) / r as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / r as f64;
    let mut out = String::new();
    header(&mut out, title);
    for j in 0..r {
        for i in 0..r {
            let idx = labels
                .binary_search_by(|l| l.as_str().cmp(map.at(i, j)))
                .unwrap_or(0);
            let x = MARGIN + i as f64 * cw;
            let y = HEIGHT - MARGIN - (j + 1) as f64 * ch;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                cw + 0.05,
                ch + 0.05,
                PALETTE[idx % PALETTE.len()]
            );
        }
    }
    axes(&mut out, &f, "x1", "x2");
    if let Some(p) = path {
        polyline(&mut out, &f, p, "black");
    }
    for (k, l) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<rect x="{:.0}" y="{:.0}" width="10" height="10" fill="{}"/><text x="{:.0}" y="{:.0}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * k as f64,
            PALETTE[k % PALETTE.len()],
            WIDTH - MARGIN + 16.0,
            MARGIN + 14.0 * k as f64 + 9.0,
            escape(l)
        );
    }
    out.push_str("</svg>\n");
    out
}
