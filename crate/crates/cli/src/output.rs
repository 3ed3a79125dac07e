//! CSV and SVG writers.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use causal_bandits::harness::CurvePoint;

pub const CSV_HEADER: [&str; 4] = ["t", "regret_mean", "regret_se", "replicates"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_curve_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for p in points {
        w.write_record([p.t.to_string(), float(p.mean), float(p.se), p.replicates.to_string()])?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One polyline per series on shared axes, with a legend.
pub fn render_svg(series: &[(String, Vec<CurvePoint>)]) -> String {
    let (w, h, left, right, top, bottom) = (800.0, 500.0, 70.0, 200.0, 20.0, 50.0);
    let x_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.t as f64))
        .fold(1.0, f64::max);
    let y_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.mean))
        .fold(0.0, f64::max)
        .max(1e-9);
    let px = |t: f64| left + (w - left - right) * t / x_max;
    let py = |y: f64| h - bottom - (h - top - bottom) * y / y_max;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            px(frac * x_max),
            h - bottom + 18.0,
            frac * x_max
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            py(frac * y_max) + 4.0,
            frac * y_max
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t</text>"#,
        (left + w - right) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">regret</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.t as f64), py(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/>"#,
            w - right + 10.0,
            w - right + 30.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            w - right + 36.0,
            ly + 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, 1.0 / 3.0, 2606.7731586650825, 1e-300, 123_456_789.123_456_78] {
            let s = float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let pts = |k: f64| {
            (1..=3)
                .map(|t| CurvePoint {
                    t,
                    mean: k * t as f64,
                    se: 0.0,
                    replicates: 1,
                })
                .collect::<Vec<_>>()
        };
        let svg = render_svg(&[("a".into(), pts(1.0)), ("b<c".into(), pts(2.0))]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }
}
