//! Accuracy-versus-GFLOPs trade-off curves as SVG.
//!
//! Each table is reduced to its Pareto curve. A segment between adjacent
//! points is coloured by the factor that changed: red for γs, green for γt,
//! blue for γw and black when more than one changed.

use std::fmt::Write;

use a3d::deploy::{build_budget_table, TradeoffRow};
use a3d::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Spatial,
    Temporal,
    Width,
    Multiple,
}

impl SegmentKind {
    pub fn colour(self) -> &'static str {
        match self {
            SegmentKind::Spatial => "#d62728",
            SegmentKind::Temporal => "#2ca02c",
            SegmentKind::Width => "#1f77b4",
            SegmentKind::Multiple => "#000000",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SegmentKind::Spatial => "spatial",
            SegmentKind::Temporal => "temporal",
            SegmentKind::Width => "width",
            SegmentKind::Multiple => "multiple",
        }
    }
}

/// Which factor differs between `a` and `b`; `None` when the configurations are equal.
pub fn segment_kind(a: &TradeoffRow, b: &TradeoffRow) -> Option<SegmentKind> {
    let differs = |x: f64, y: f64| (x - y).abs() > 1e-9;
    let changed = [
        (differs(a.gamma_s, b.gamma_s) || a.pixels != b.pixels, SegmentKind::Spatial),
        (differs(a.gamma_t, b.gamma_t) || a.frames != b.frames, SegmentKind::Temporal),
        (differs(a.gamma_w, b.gamma_w), SegmentKind::Width),
    ];
    let mut kinds = changed.iter().filter(|(c, _)| *c).map(|&(_, k)| k);
    match (kinds.next(), kinds.next()) {
        (None, _) => None,
        (Some(k), None) => Some(k),
        _ => Some(SegmentKind::Multiple),
    }
}

/// Pareto curve of `rows`, cheapest first.
pub fn pareto_curve(rows: &[TradeoffRow]) -> Result<Vec<TradeoffRow>> {
    let table = build_budget_table("", [1, 1], rows)?;
    Ok(table
        .entries
        .iter()
        .rev()
        .map(|e| {
            *rows
                .iter()
                .find(|r| r.config() == e.config() && r.gflops == e.gflops && r.top1 == e.top1)
                .expect("entries come from rows")
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub from: usize,
    pub to: usize,
    pub kind: SegmentKind,
}

/// Segments between adjacent points of a curve.
pub fn segments(curve: &[TradeoffRow]) -> Vec<Segment> {
    curve
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            segment_kind(&w[0], &w[1]).map(|kind| Segment {
                from: i,
                to: i + 1,
                kind,
            })
        })
        .collect()
}

/// A labelled curve ready for drawing.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub points: Vec<TradeoffRow>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: [f64; 4] = [60.0, 20.0, 30.0, 60.0];
const MARKERS: [&str; 4] = ["circle", "square", "diamond", "triangle"];

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn marker(kind: &str, x: f64, y: f64, fill: &str) -> String {
    match kind {
        "square" => format!(r#"<rect x="{:.1}" y="{:.1}" width="7" height="7" fill="{fill}"/>"#, x - 3.5, y - 3.5),
        "diamond" => format!(
            r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="{fill}"/>"#,
            x,
            y - 4.5,
            x + 4.5,
            y,
            x,
            y + 4.5,
            x - 4.5,
            y
        ),
        "triangle" => format!(
            r#"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="{fill}"/>"#,
            x,
            y - 4.5,
            x + 4.5,
            y + 4.0,
            x - 4.5,
            y + 4.0
        ),
        _ => format!(r#"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="{fill}"/>"#),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders curves on shared axes: x = GFLOPs per view, y = top-1 (%).
pub fn render_svg(curves: &[Curve]) -> String {
    let all: Vec<&TradeoffRow> = curves.iter().flat_map(|c| &c.points).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for r in &all {
        x0 = x0.min(r.gflops);
        x1 = x1.max(r.gflops);
        y0 = y0.min(r.top1);
        y1 = y1.max(r.top1);
    }
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 100.0);
    }
    let pad = |lo: f64, hi: f64| {
        let d = ((hi - lo) * 0.05).max(0.5);
        (lo - d, hi + d)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let [left, top, right, bottom] = [MARGIN[3], MARGIN[2], MARGIN[1], MARGIN[0]];
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (W - left - right);
    let py = |y: f64| H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        W - left - right,
        H - top - bottom
    );
    for t in ticks(x0, x1) {
        let x = px(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            top,
            H - bottom,
            H - bottom + 16.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = py(t);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            W - right,
            left - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">GFLOPs per view</text>"#, (left + W - right) / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">Top-1 (%)</text>"#,
        (top + H - bottom) / 2.0,
        (top + H - bottom) / 2.0
    );
    for (ci, curve) in curves.iter().enumerate() {
        let m = MARKERS[ci % MARKERS.len()];
        for seg in segments(&curve.points) {
            let (a, b) = (&curve.points[seg.from], &curve.points[seg.to]);
            let _ = writeln!(
                s,
                r#"<line class="segment {}" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#,
                seg.kind.label(),
                px(a.gflops),
                py(a.top1),
                px(b.gflops),
                py(b.top1),
                seg.kind.colour()
            );
        }
        for r in &curve.points {
            let _ = writeln!(s, "{}", marker(m, px(r.gflops), py(r.top1), "#333"));
        }
        let ly = top + 16.0 + 16.0 * ci as f64;
        let _ = writeln!(s, "{}", marker(m, left + 14.0, ly - 4.0, "#333"));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, left + 24.0, escape(&curve.label));
    }
    let kinds = [SegmentKind::Spatial, SegmentKind::Temporal, SegmentKind::Width, SegmentKind::Multiple];
    for (k, kind) in kinds.iter().enumerate() {
        let (x, y) = (W - right - 110.0, H - bottom - 70.0 + 16.0 * k as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{y:.1}">{}</text>"#,
            y - 4.0,
            x + 20.0,
            y - 4.0,
            kind.colour(),
            x + 26.0,
            kind.label()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(t: f64) -> String {
    let r = (t * 1000.0).round() / 1000.0;
    if r == r.trunc() {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}
