use std::collections::BTreeMap;
use std::fmt::Write;

use crate::curriculum::Method;

use super::stats::Statistics;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn color(method: Method) -> &'static str {
    match method {
        Method::Cnas => "#1f77b4",
        Method::Fixed => "#d62728",
        Method::Node => "#2ca02c",
        Method::Random => "#7f7f7f",
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of mean inferred reward against stage, one line per method.
/// The output depends only on its inputs.
pub fn render_svg(title: &str, stats: &Statistics) -> String {
    let mut lines: BTreeMap<Method, Vec<(usize, f64)>> = BTreeMap::new();
    for s in &stats.stages {
        lines.entry(s.method).or_default().push((s.stage, s.mean));
    }
    let max_stage = stats.stages.iter().map(|s| s.stage).max().unwrap_or(1).max(2);
    let (mut lo, mut hi) = stats
        .stages
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.mean), hi.max(s.mean))
        });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    lo = (lo * 10.0).floor() / 10.0;
    hi = (hi * 10.0).ceil() / 10.0;
    if hi - lo < 0.1 {
        hi = lo + 0.1;
    }
    let x = |stage: usize| MARGIN + (stage - 1) as f64 / (max_stage - 1) as f64 * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x1:.1}" y2="{y0:.1}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x0:.1}" y2="{y1:.1}" stroke="black"/>"#
    );
    for stage in 1..=max_stage {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{stage}</text>"#,
            x(stage),
            y0 + 16.0
        );
    }
    let ticks = 5;
    for t in 0..=ticks {
        let v = lo + (hi - lo) * t as f64 / ticks as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">stage</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">mean inferred reward</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, (method, points)) in lines.iter().enumerate() {
        let c = color(*method);
        let coords: Vec<String> = points
            .iter()
            .map(|&(s, v)| format!("{:.1},{:.1}", x(s), y(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for &(s, v) in points {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, x(s), y(v));
        }
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{c}" stroke-width="2"/>"#,
            x1 - 90.0,
            x1 - 70.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{method}</text>"#, x1 - 64.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}
