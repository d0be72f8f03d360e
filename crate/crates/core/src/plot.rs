//! Minimal SVG line charts with optional shaded bands.
//!
//! Data coordinates map linearly onto the plot area described by [`Frame`];
//! polyline vertices are written with three decimals, so a value can be
//! recovered to within `0.0005 / scale` of the data axis.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// `(low, high)` per point, drawn as a translucent band.
    pub band: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Data-to-pixel mapping of a chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Frame {
    pub const LEFT: f64 = MARGIN_LEFT;
    pub const TOP: f64 = MARGIN_TOP;
    pub const PLOT_WIDTH: f64 = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    pub const PLOT_HEIGHT: f64 = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

    pub fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let px = Self::LEFT + (x - self.x_min) / (self.x_max - self.x_min) * Self::PLOT_WIDTH;
        let py = Self::TOP + (self.y_max - y) / (self.y_max - self.y_min) * Self::PLOT_HEIGHT;
        (px, py)
    }

    pub fn from_px(&self, px: f64, py: f64) -> (f64, f64) {
        let x = self.x_min + (px - Self::LEFT) / Self::PLOT_WIDTH * (self.x_max - self.x_min);
        let y = self.y_max - (py - Self::TOP) / Self::PLOT_HEIGHT * (self.y_max - self.y_min);
        (x, y)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl LineChart {
    pub fn frame(&self) -> Frame {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
            for &(lo, hi) in s.band.iter().flatten() {
                ys.push(lo);
                ys.push(hi);
            }
        }
        let fold = |v: &[f64]| {
            v.iter().filter(|x| x.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
        };
        let (x_lo, x_hi) = fold(&xs);
        let (y_lo, y_hi) = fold(&ys);
        let (x_min, x_max) = if x_hi > x_lo { (x_lo, x_hi) } else { padded(x_lo, x_hi) };
        let (y_min, y_max) = padded(y_lo, y_hi);
        Frame { x_min, x_max, y_min, y_max }
    }

    pub fn to_svg(&self) -> String {
        let frame = self.frame();
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            Frame::LEFT + Frame::PLOT_WIDTH / 2.0,
            escape(&self.title)
        );
        let (x0, y0) = (Frame::LEFT, Frame::TOP + Frame::PLOT_HEIGHT);
        let _ = writeln!(
            svg,
            r#"<rect class="frame" data-domain="{},{},{},{}" x="{x0}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            frame.x_min,
            frame.x_max,
            frame.y_min,
            frame.y_max,
            Frame::TOP,
            Frame::PLOT_WIDTH,
            Frame::PLOT_HEIGHT
        );
        for t in 0..=4 {
            let f = t as f64 / 4.0;
            let xv = frame.x_min + f * (frame.x_max - frame.x_min);
            let yv = frame.y_min + f * (frame.y_max - frame.y_min);
            let (px, _) = frame.to_px(xv, frame.y_min);
            let (_, py) = frame.to_px(frame.x_min, yv);
            let _ = writeln!(svg, r#"<line x1="{px:.3}" y1="{y0}" x2="{px:.3}" y2="{}" stroke="black"/>"#, y0 + 5.0);
            let _ = writeln!(svg, r#"<text x="{px:.3}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, tick(xv));
            let _ = writeln!(svg, r#"<line x1="{}" y1="{py:.3}" x2="{x0}" y2="{py:.3}" stroke="black"/>"#, x0 - 5.0);
            let _ = writeln!(svg, r#"<text x="{}" y="{:.3}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, tick(yv));
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            Frame::LEFT + Frame::PLOT_WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            Frame::TOP + Frame::PLOT_HEIGHT / 2.0,
            escape(&self.y_label)
        );

        for (s_idx, s) in self.series.iter().enumerate() {
            let color = PALETTE[s_idx % PALETTE.len()];
            if let Some(band) = &s.band {
                let upper = s.points.iter().zip(band).map(|(&(x, _), &(_, hi))| frame.to_px(x, hi));
                let lower = s.points.iter().zip(band).rev().map(|(&(x, _), &(lo, _))| frame.to_px(x, lo));
                let pts: Vec<String> = upper.chain(lower).map(|(px, py)| format!("{px:.3},{py:.3}")).collect();
                let _ = writeln!(
                    svg,
                    r#"<polygon class="band" data-series="{}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                    escape(&s.label),
                    pts.join(" ")
                );
            }
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| {
                    let (px, py) = frame.to_px(x, y);
                    format!("{px:.3},{py:.3}")
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                escape(&s.label),
                pts.join(" ")
            );
            let ly = Frame::TOP + 10.0 + 18.0 * s_idx as f64;
            let lx = Frame::LEFT + Frame::PLOT_WIDTH + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Extracts `(series label, vertices)` for every `<polyline class="series">`.
pub fn parse_series_polylines(svg: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    svg.lines()
        .filter(|l| l.starts_with(r#"<polyline class="series""#))
        .filter_map(|l| {
            let label = attr(l, "data-series")?;
            let pts = attr(l, "points")?
                .split_whitespace()
                .filter_map(|p| {
                    let (x, y) = p.split_once(',')?;
                    Some((x.parse().ok()?, y.parse().ok()?))
                })
                .collect();
            Some((label, pts))
        })
        .collect()
}

/// Data ranges recorded on the plot frame, so pixel coordinates can be mapped back.
pub fn parse_frame(svg: &str) -> Option<Frame> {
    let line = svg.lines().find(|l| l.starts_with(r#"<rect class="frame""#))?;
    let v: Vec<f64> = attr(line, "data-domain")?.split(',').map(|x| x.parse().ok()).collect::<Option<_>>()?;
    match v[..] {
        [x_min, x_max, y_min, y_max] => Some(Frame { x_min, x_max, y_min, y_max }),
        _ => None,
    }
}

fn attr(line: &str, name: &str) -> Option<String> {
    let key = format!(r#"{name}=""#);
    let start = line.find(&key)? + key.len();
    let end = start + line[start..].find('"')?;
    Some(line[start..end].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let f = Frame { x_min: 2.0, x_max: 20.0, y_min: -1.0, y_max: 3.0 };
        let (px, py) = f.to_px(7.5, 0.25);
        let (x, y) = f.from_px(px, py);
        assert!((x - 7.5).abs() < 1e-12 && (y - 0.25).abs() < 1e-12);
    }

    #[test]
    fn polylines_parse_back() {
        let chart = LineChart {
            title: "t".into(),
            x_label: "K".into(),
            y_label: "MARE".into(),
            series: vec![Series {
                label: "rademacher".into(),
                points: vec![(2.0, 0.5), (4.0, 0.25), (6.0, 0.125)],
                band: Some(vec![(0.4, 0.6), (0.2, 0.3), (0.1, 0.15)]),
            }],
        };
        let svg = chart.to_svg();
        let frame = chart.frame();
        assert_eq!(parse_frame(&svg), Some(frame));
        let parsed = parse_series_polylines(&svg);
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].0, "rademacher");
        for (&(px, py), &(x, y)) in parsed[0].1.iter().zip(&chart.series[0].points) {
            let (bx, by) = frame.from_px(px, py);
            assert!((bx - x).abs() < 1e-3 && (by - y).abs() < 1e-3);
        }
    }

    #[test]
    fn flat_series_gets_a_nonempty_range() {
        let chart = LineChart {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![Series { label: "z".into(), points: vec![(1.0, 0.0), (2.0, 0.0)], band: None }],
        };
        let f = chart.frame();
        assert!(f.y_max > f.y_min);
        assert!(chart.to_svg().contains("polyline"));
    }
}
