//! Single-file SVG renderings of line series and heatmaps.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polylines over a shared x axis; non-finite points break the line.
pub fn line_chart(title: &str, series: &[(&str, &[f64])]) -> String {
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let finite = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n<text x=\"{MARGIN}\" y=\"20\">{}</text>\n",
        escape(title)
    );
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for (i, v) in values.iter().enumerate() {
            if v.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", x(i), y(*v));
            } else if !pts.is_empty() {
                let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>", pts.trim_end());
                pts.clear();
            }
        }
        if !pts.is_empty() {
            let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>", pts.trim_end());
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\">{}</text>",
            WIDTH - MARGIN - 120.0,
            20.0 + 14.0 * k as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Grid of cells shaded from white (smallest) to dark blue (largest);
/// `None` cells are left blank. `rows[r][c]`.
pub fn heatmap(title: &str, rows: &[Vec<Option<f64>>]) -> String {
    let n_rows = rows.len().max(1);
    let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let vals = rows.iter().flatten().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cw = (WIDTH - 2.0 * MARGIN) / n_cols as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / n_rows as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n<text x=\"{MARGIN}\" y=\"20\">{}</text>\n",
        escape(title)
    );
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let Some(v) = v.filter(|v| v.is_finite()) else { continue };
            let s = ((v - lo) / span).clamp(0.0, 1.0);
            let shade = |full: f64| (255.0 - s * (255.0 - full)).round() as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#{:02x}{:02x}{:02x}\"/>",
                MARGIN + c as f64 * cw,
                MARGIN + r as f64 * ch,
                cw,
                ch,
                shade(8.0),
                shade(48.0),
                shade(107.0)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
