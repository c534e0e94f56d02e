//! Static SVG plots.

use std::fmt::Write;

use stable_transport::coupling::PalmStatistics;
use stable_transport::voronoi::TerritoryDiagnostics;
use stable_transport::{AtomicMeasure, ConstrainedDensity};

const SIZE: f64 = 640.0;
const MARGIN: f64 = 40.0;

fn color(k: usize) -> String {
    format!("hsl({:.1},65%,55%)", (k as f64 * 137.508) % 360.0)
}

/// Maps data coordinates in `[lo, hi]` onto the drawing area, `y` up.
struct Canvas {
    lo: [f64; 2],
    hi: [f64; 2],
    body: String,
}

impl Canvas {
    fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = pad(lo[0], hi[0]);
        let (y0, y1) = pad(lo[1], hi[1]);
        Self { lo: [x0, y0], hi: [x1, y1], body: String::new() }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = SIZE - 2.0 * MARGIN;
        (
            MARGIN + (x - self.lo[0]) / (self.hi[0] - self.lo[0]) * w,
            SIZE - MARGIN - (y - self.lo[1]) / (self.hi[1] - self.lo[1]) * w,
        )
    }

    fn scale(&self) -> f64 {
        (SIZE - 2.0 * MARGIN) / (self.hi[0] - self.lo[0]).max(self.hi[1] - self.lo[1])
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let (cx, cy) = self.px(x, y);
        let _ = writeln!(self.body, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="{fill}"/>"#);
    }

    fn polygon(&mut self, pts: &[[f64; 2]], fill: &str, opacity: f64) {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = self.px(p[0], p[1]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" fill-opacity="{opacity}" stroke="{fill}" stroke-width="1"/>"#,
            coords.join(" ")
        );
    }

    fn line(&mut self, a: [f64; 2], b: [f64; 2], stroke: &str, width: f64) {
        let (x1, y1) = self.px(a[0], a[1]);
        let (x2, y2) = self.px(b[0], b[1]);
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    fn polyline(&mut self, pts: &[[f64; 2]], stroke: &str) {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = self.px(p[0], p[1]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str) {
        let _ = writeln!(self.body, r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="13">{s}</text>"#);
    }

    fn frame(&mut self) {
        let (x0, y0) = self.px(self.lo[0], self.hi[1]);
        let (x1, y1) = self.px(self.hi[0], self.lo[1]);
        let _ = writeln!(
            self.body,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
    }

    fn finish(mut self, title: &str) -> String {
        self.frame();
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="15">{title}</text>"#);
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

fn bounds<'a>(measures: impl IntoIterator<Item = &'a AtomicMeasure<f64>>) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for m in measures {
        if let Some(p) = m.geometry().period() {
            for k in 0..m.dim().min(2) {
                lo[k] = lo[k].min(0.0);
                hi[k] = hi[k].max(p[k]);
            }
            continue;
        }
        for i in 0..m.len() {
            for (k, &c) in m.position(i).iter().take(2).enumerate() {
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
            }
        }
    }
    for k in 0..2 {
        if !lo[k].is_finite() {
            (lo[k], hi[k]) = (0.0, 1.0);
        }
    }
    (lo, hi)
}

/// Embeds a point of dimension one or two in the plane; one-dimensional
/// sites sit on a lower strip and centers on an upper one.
fn planar(p: &[f64], strip: f64) -> [f64; 2] {
    if p.len() >= 2 {
        [p[0], p[1]]
    } else {
        [p[0], strip]
    }
}

/// Every site colored by the center that receives most of its mass.
pub fn transport_plot(f: &ConstrainedDensity<f64>) -> String {
    let (phi, psi) = (f.phi(), f.psi());
    let (mut lo, mut hi) = bounds([&**phi, &**psi]);
    let one_d = phi.dim() == 1;
    if one_d {
        (lo[1], hi[1]) = (0.0, 1.0);
    }
    let mut c = Canvas::new(lo, hi);
    let spacing = if one_d {
        (hi[0] - lo[0]) / phi.len().max(1) as f64
    } else {
        ((hi[0] - lo[0]) * (hi[1] - lo[1]) / phi.len().max(1) as f64).sqrt()
    };
    let r = (0.5 * spacing * c.scale()).clamp(0.5, 6.0);
    for i in 0..phi.len() {
        let (cols, vals) = f.row(i);
        let main = cols.iter().zip(vals).max_by(|a, b| (a.1 * psi.weight(*a.0 as usize)).total_cmp(&(b.1 * psi.weight(*b.0 as usize))));
        let fill = main.map_or_else(|| "#bbbbbb".to_string(), |(&j, _)| color(j as usize));
        let p = planar(phi.position(i), 0.3);
        if one_d {
            c.line([p[0], 0.2], [p[0], 0.4], &fill, r.max(1.0));
        } else {
            c.circle(p[0], p[1], r, &fill);
        }
    }
    for j in 0..psi.len() {
        let p = planar(psi.position(j), 0.7);
        c.circle(p[0], p[1], 4.0, "black");
        c.circle(p[0], p[1], 2.5, &color(j));
    }
    c.finish(&format!("{} sites, {} centers", phi.len(), psi.len()))
}

/// Territory outlines traced along the diagnostic rays.
pub fn territory_plot(psi: &AtomicMeasure<f64>, diagnostics: &[TerritoryDiagnostics<f64>]) -> String {
    let (lo, hi) = bounds([psi]);
    let mut c = Canvas::new(lo, hi);
    for d in diagnostics {
        let center = psi.position(d.center);
        let rays = stable_transport::voronoi::ray_directions::<f64>(2, d.rays, 0);
        let pts: Vec<[f64; 2]> = d
            .boundary
            .iter()
            .zip(&rays)
            .map(|(b, u)| match b {
                Some(p) => [p[0], p[1]],
                None => [center[0] + u[0] * d.search_range, center[1] + u[1] * d.search_range],
            })
            .collect();
        c.polygon(&pts, &color(d.center), 0.25);
    }
    for j in 0..psi.len() {
        let p = psi.position(j);
        c.circle(p[0], p[1], 3.0, "black");
    }
    c.finish(&format!("{} territories", diagnostics.len()))
}

/// Mean counts with two-standard-error bars against the Poisson curve.
pub fn palm_plot(stats: &PalmStatistics, prediction: &[f64]) -> String {
    let top = stats
        .mean_counts
        .iter()
        .zip(&stats.std_errors)
        .map(|(m, e)| m + 2.0 * e.max(0.0))
        .chain(prediction.iter().copied())
        .filter(|v| v.is_finite())
        .fold(1.0, f64::max);
    let r_max = stats.radii.iter().copied().fold(0.0, f64::max);
    let mut c = Canvas::new([0.0, 0.0], [r_max.max(1e-9), top]);
    // The canvas is square in data units; stretch y to fill it.
    let ys = r_max.max(1e-9) / top;
    let mut order: Vec<usize> = (0..stats.radii.len()).collect();
    order.sort_by(|&a, &b| stats.radii[a].total_cmp(&stats.radii[b]));
    let curve: Vec<[f64; 2]> = order.iter().map(|&k| [stats.radii[k], prediction[k] * ys]).collect();
    c.polyline(&curve, "#888888");
    for &k in &order {
        let (r, m, e) = (stats.radii[k], stats.mean_counts[k], stats.std_errors[k]);
        if e.is_finite() {
            c.line([r, (m - 2.0 * e) * ys], [r, (m + 2.0 * e) * ys], "black", 1.0);
        }
        c.circle(r, m * ys, 3.5, &color(0));
    }
    c.text(MARGIN, SIZE - 12.0, &format!("radius (max {r_max}); counts up to {top:.2}; grey: Poisson"));
    c.finish(&format!("Palm counts, {} samples", stats.samples))
}
