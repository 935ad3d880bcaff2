//! Learning curves across seeds: aggregation and a small SVG writer.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use tracklet_core::marl::MetricsRow;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub train_episodes: u64,
    pub n_runs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, min and max of `mean_eval_reward` at each training-episode count.
pub fn aggregate(runs: &[Vec<MetricsRow>]) -> Vec<CurvePoint> {
    let mut by_x: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for r in run {
            by_x.entry(r.train_episodes).or_default().push(r.mean_eval_reward);
        }
    }
    by_x.into_iter()
        .map(|(x, ys)| CurvePoint {
            train_episodes: x,
            n_runs: ys.len(),
            mean: ys.iter().sum::<f64>() / ys.len() as f64,
            min: ys.iter().copied().fold(f64::INFINITY, f64::min),
            max: ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo > 1e-12 {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Mean curve with a shaded min/max band. The band is omitted when every
/// point comes from a single run.
pub fn render_svg(points: &[CurvePoint], title: &str) -> String {
    let x_lo = points.first().map_or(0.0, |p| p.train_episodes as f64);
    let x_hi = points.last().map_or(1.0, |p| p.train_episodes as f64);
    let (x_lo, x_hi) = if x_hi > x_lo { (x_lo, x_hi) } else { (x_lo - 1.0, x_hi + 1.0) };
    let y_lo = points.iter().map(|p| p.min).fold(f64::INFINITY, f64::min);
    let y_hi = points.iter().map(|p| p.max).fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = nice_range(y_lo, y_hi);
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (left, right, top, bottom) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x_lo + f * (x_hi - x_lo), y_lo + f * (y_hi - y_lo));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{xv:.0}</text>"#,
            bottom + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{yv:.1}</text>"#,
            left - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">training episodes</text>"#,
        W / 2.0,
        H - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">mean eval reward</text>"#,
        H / 2.0,
        H / 2.0
    );

    if points.iter().any(|p| p.n_runs > 1) {
        let mut d = String::new();
        for (i, p) in points.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, sx(p.train_episodes as f64), sy(p.max));
        }
        for p in points.iter().rev() {
            let _ = write!(d, "L{:.2} {:.2} ", sx(p.train_episodes as f64), sy(p.min));
        }
        let _ = writeln!(s, r##"<path class="band" d="{}Z" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##, d);
    }
    let pts: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.train_episodes as f64), sy(p.mean)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline class="mean" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        pts.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
