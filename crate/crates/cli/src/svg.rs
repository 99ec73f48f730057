//! Minimal static SVG line charts for run-length paths.

use std::fmt::Write as _;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;

/// One polyline per series, dashed vertical lines at `markers`, and a legend.
pub fn runlength_chart(title: &str, series: &[(String, Vec<usize>)], markers: &[usize]) -> String {
    let steps = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0).max(2);
    let top = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .max()
        .unwrap_or(1)
        .max(1);
    let x = |t: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * t as f64 / (steps - 1) as f64;
    let y = |r: usize| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * r as f64 / top as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}"/></g>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">0</text><text x="4" y="{}" font-family="sans-serif" font-size="11">{top}</text><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
        HEIGHT - MARGIN + 14.0,
        MARGIN + 4.0,
        WIDTH - MARGIN - 20.0,
        HEIGHT - MARGIN + 14.0,
        steps - 1
    );
    for &m in markers {
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{MARGIN}" x2="{0:.2}" y2="{1}" stroke="gray" stroke-dasharray="5,4"/>"#,
            x(m),
            HEIGHT - MARGIN
        );
    }
    for (i, (label, path)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = path
            .iter()
            .enumerate()
            .map(|(t, &r)| format!("{:.2},{:.2}", x(t), y(r)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{colour}">{}</text>"#,
            WIDTH - MARGIN - 80.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
