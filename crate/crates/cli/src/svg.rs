//! Minimal static SVG charts.

use std::fmt::Write;

const W: f64 = 900.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 70.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub values: Vec<Option<f64>>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn map(v: f64, (lo, hi): (f64, f64), a: f64, b: f64) -> f64 {
    a + (v - lo) / (hi - lo) * (b - a)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, title: &str, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

/// Polyline runs broken at missing values.
fn polylines(out: &mut String, points: &[Option<(f64, f64)>], color: &str) {
    for run in points.split(|p| p.is_none()) {
        if run.is_empty() {
            continue;
        }
        let coords: Vec<String> = run.iter().flatten().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
    }
}

fn y_ticks(out: &mut String, r: (f64, f64), x: f64, anchor: &str, color: &str, top: f64, bottom: f64) {
    for i in 0..=4 {
        let v = r.0 + (r.1 - r.0) * i as f64 / 4.0;
        let y = map(v, r, bottom, top);
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="{anchor}" fill="{color}">{v:.3}</text>"#,
            y + 4.0
        );
    }
}

/// Two series sharing a date axis, each on its own vertical scale. Dates
/// flagged in `shaded` get a grey band.
pub fn dual_axis_series(title: &str, dates: &[String], left: &Series, right: &Series, shaded: &[bool]) -> String {
    let mut out = String::new();
    open(&mut out, title, W, H);
    let n = dates.len().max(2);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let x_at = |i: usize| x0 + (x1 - x0) * i as f64 / (n - 1) as f64;
    let step = (x1 - x0) / (n - 1) as f64;
    for (i, _) in shaded.iter().enumerate().filter(|(_, s)| **s) {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{y1:.1}" width="{step:.2}" height="{:.1}" fill="#e6e6e6"/>"##,
            x_at(i) - step / 2.0,
            y0 - y1
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for (series, x_tick, anchor) in [(left, x0 - 6.0, "end"), (right, x1 + 6.0, "start")] {
        let r = range(series.values.iter().flatten().copied());
        let pts: Vec<Option<(f64, f64)>> = series
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v.map(|v| (x_at(i), map(v, r, y0, y1))))
            .collect();
        polylines(&mut out, &pts, series.color);
        y_ticks(&mut out, r, x_tick, anchor, series.color, y1, y0);
    }
    if !dates.is_empty() {
        for i in [0, dates.len() / 2, dates.len() - 1] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                x_at(i),
                y0 + 18.0,
                escape(&dates[i])
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{x0}" y="{:.1}" fill="{}">{}</text>"#,
        H - 10.0,
        left.color,
        escape(left.name)
    );
    let _ = writeln!(
        out,
        r#"<text x="{x1}" y="{:.1}" text-anchor="end" fill="{}">{}</text>"#,
        H - 10.0,
        right.color,
        escape(right.name)
    );
    out.push_str("</svg>\n");
    out
}

/// Scatter of `(x, y)` with density curves along the top and right edges.
pub fn scatter_with_marginals(
    title: &str,
    (x_name, x): (&str, &[f64]),
    (y_name, y): (&str, &[f64]),
    x_density: (&[f64], &[f64]),
    y_density: (&[f64], &[f64]),
) -> String {
    let size = 560.0;
    let band = 90.0;
    let mut out = String::new();
    open(&mut out, title, size + band, size + band);
    let (px0, px1) = (LEFT, size - 20.0);
    let (py0, py1) = (size + band - BOTTOM, band + TOP);
    let xr = range(x.iter().chain(x_density.0).copied());
    let yr = range(y.iter().chain(y_density.0).copied());
    let _ = writeln!(
        out,
        r#"<rect x="{px0}" y="{py1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        px1 - px0,
        py0 - py1
    );
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f77b4" fill-opacity="0.6"/>"##,
            map(*a, xr, px0, px1),
            map(*b, yr, py0, py1)
        );
    }
    let peak = |d: &[f64]| d.iter().copied().fold(0.0f64, f64::max).max(1e-300);
    let top: Vec<Option<(f64, f64)>> = x_density
        .0
        .iter()
        .zip(x_density.1)
        .map(|(g, d)| Some((map(*g, xr, px0, px1), py1 - 8.0 - d / peak(x_density.1) * (band - 8.0))))
        .collect();
    polylines(&mut out, &top, "#d62728");
    let side: Vec<Option<(f64, f64)>> = y_density
        .0
        .iter()
        .zip(y_density.1)
        .map(|(g, d)| Some((px1 + 8.0 + d / peak(y_density.1) * (band - 8.0), map(*g, yr, py0, py1))))
        .collect();
    polylines(&mut out, &side, "#d62728");
    for i in 0..=4 {
        let xv = xr.0 + (xr.1 - xr.0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#,
            map(xv, xr, px0, px1),
            py0 + 16.0
        );
    }
    y_ticks(&mut out, yr, px0 - 6.0, "end", "black", py1, py0);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (px0 + px1) / 2.0,
        py0 + 36.0,
        escape(x_name)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{}</text>"#,
        (py0 + py1) / 2.0,
        (py0 + py1) / 2.0,
        escape(y_name)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_split_lines_and_text_is_escaped() {
        let s = Series {
            name: "a<b",
            color: "red",
            values: vec![Some(1.0), None, Some(2.0), Some(3.0)],
        };
        let t = Series {
            name: "c",
            color: "blue",
            values: vec![Some(0.0); 4],
        };
        let dates: Vec<String> = (1..=4).map(|d| format!("2024-01-0{d}")).collect();
        let svg = dual_axis_series("x & y", &dates, &s, &t, &[false, true, false, false]);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("x &amp; y") && svg.contains("a&lt;b"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
