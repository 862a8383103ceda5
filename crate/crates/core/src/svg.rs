//! Minimal static SVG output for maps and curves.

use std::fmt::Write;

use crate::grid::FieldMap;

/// Diverging blue-white-red heat map, symmetric about zero.
pub fn heatmap(map: &FieldMap, title: &str) -> String {
    let (w, h) = (map.width(), map.height());
    let scale = 4;
    let lim = map.min().abs().max(map.max().abs()).max(f64::MIN_POSITIVE);
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" shape-rendering="crispEdges">"#,
        w * scale,
        h * scale + 20
    );
    let _ = write!(
        s,
        r#"<text x="2" y="14" font-family="sans-serif" font-size="12">{} (|max| {:.3e})</text>"#,
        escape(title),
        lim
    );
    for y in 0..h {
        for x in 0..w {
            let v = (map.get(x, y) / lim).clamp(-1.0, 1.0);
            let (r, g, b) = if v >= 0.0 {
                (255, (255.0 * (1.0 - v)) as u8, (255.0 * (1.0 - v)) as u8)
            } else {
                ((255.0 * (1.0 + v)) as u8, (255.0 * (1.0 + v)) as u8, 255)
            };
            // image rows run bottom to top so +y points up
            let _ = write!(
                s,
                r#"<rect x="{}" y="{}" width="{scale}" height="{scale}" fill="rgb({r},{g},{b})"/>"#,
                x * scale,
                20 + (h - 1 - y) * scale
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Line plot of one or more series against `x`, optionally on log-log axes.
pub fn line_plot(title: &str, x: &[f64], series: &[(&str, &[f64])], loglog: bool) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let tf = |v: f64| if loglog { v.abs().max(f64::MIN_POSITIVE).log10() } else { v };
    let xs: Vec<f64> = x.iter().map(|&v| tf(v)).collect();
    let all: Vec<f64> = series
        .iter()
        .flat_map(|(_, ys)| ys.iter().map(|&v| tf(v)))
        .filter(|v| v.is_finite())
        .collect();
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&all);
    let px = |v: f64| m + (v - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |v: f64| h - m - (v - y0) / (y1 - y0) * (h - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}"><rect width="{w}" height="{h}" fill="white"/>"#
    );
    let _ = write!(
        s,
        r#"<text x="{m}" y="20" font-family="sans-serif" font-size="13">{}</text>"#,
        escape(title)
    );
    let _ = write!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    let label = |v: f64| if loglog { format!("1e{v:.1}") } else { format!("{v:.3e}") };
    for (v, anchor, xx, yy) in [
        (x0, "start", m, h - m + 15.0),
        (x1, "end", w - m, h - m + 15.0),
    ] {
        let _ = write!(
            s,
            r#"<text x="{xx}" y="{yy}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{}</text>"#,
            label(v)
        );
    }
    for (v, yy) in [(y0, h - m), (y1, m + 10.0)] {
        let _ = write!(
            s,
            r#"<text x="2" y="{yy}" font-family="sans-serif" font-size="10">{}</text>"#,
            label(v)
        );
    }
    for (i, (name, ys)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let pts: Vec<String> = xs
            .iter()
            .zip(ys.iter())
            .filter(|(_, y)| tf(**y).is_finite())
            .map(|(&xv, &yv)| format!("{:.2},{:.2}", px(xv), py(tf(yv))))
            .collect();
        let _ = write!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{c}">{}</text>"#,
            w - m - 150.0,
            m + 15.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
