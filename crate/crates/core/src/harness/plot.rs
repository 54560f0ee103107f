//! Minimal deterministic SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::aggregate::{series, Series, SeriesPoint};
use super::metrics::MetricRow;
use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 140.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 48.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Line<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
    /// Lower and upper band per point.
    band: Option<Vec<(f64, f64)>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 5.0, 10.0] {
        if m * mag >= v {
            return m * mag;
        }
    }
    10.0 * mag
}

fn chart(title: &str, y_label: &str, lines: &[Line<'_>], y_range: Option<(f64, f64)>) -> String {
    let x_max = lines
        .iter()
        .flat_map(|l| l.points.iter().map(|p| p.0))
        .fold(0.0, f64::max)
        .max(1.0);
    let (y_min, y_max) = y_range.unwrap_or_else(|| {
        let top = lines
            .iter()
            .flat_map(|l| {
                l.points
                    .iter()
                    .map(|p| p.1)
                    .chain(l.band.iter().flatten().map(|b| b.1))
            })
            .fold(0.0, f64::max);
        (0.0, nice_max(top))
    });
    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + pw * x / x_max;
    let sy = |y: f64| MARGIN_TOP + ph * (1.0 - (y.clamp(y_min, y_max) - y_min) / (y_max - y_min));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        MARGIN_LEFT + pw / 2.0,
        escape(title)
    );
    // Axes and ticks.
    let _ = writeln!(
        s,
        r#"<path d="M{l:.1},{t:.1} L{l:.1},{b:.1} L{r:.1},{b:.1}" stroke="black" fill="none"/>"#,
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = MARGIN_TOP + ph,
        r = MARGIN_LEFT + pw
    );
    for i in 0..=4 {
        let fx = x_max * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            MARGIN_TOP + ph + 16.0,
            fmt_tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(fy) + 4.0,
            fmt_tick(fy)
        );
        let _ = writeln!(
            s,
            r##"<path d="M{:.1},{:.1} H{:.1}" stroke="#dddddd"/>"##,
            MARGIN_LEFT,
            sy(fy),
            MARGIN_LEFT + pw
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t</text>"#,
        MARGIN_LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        MARGIN_TOP + ph / 2.0,
        MARGIN_TOP + ph / 2.0,
        escape(y_label)
    );

    for (i, line) in lines.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if let Some(band) = &line.band {
            let mut d = String::new();
            for (k, ((x, _), (lo, _))) in line.points.iter().zip(band).enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, sx(*x), sy(*lo));
            }
            for ((x, _), (_, hi)) in line.points.iter().zip(band).rev() {
                let _ = write!(d, "L{:.2},{:.2} ", sx(*x), sy(*hi));
            }
            let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, d);
        }
        let pts: Vec<String> = line
            .points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN_TOP + 14.0 * i as f64 + 6.0;
        let lx = MARGIN_LEFT + pw + 10.0;
        let _ = writeln!(
            s,
            r#"<path d="M{:.1},{:.1} h16" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx,
            ly,
            lx + 20.0,
            ly + 4.0,
            escape(line.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn line_of<'a>(s: &'a Series, value: impl Fn(&SeriesPoint) -> f64, with_band: bool) -> Line<'a> {
    let points = s.points.iter().map(|p| (p.t as f64, value(p))).collect();
    let band = (with_band && s.points.iter().any(|p| p.n > 1)).then(|| {
        s.points
            .iter()
            .map(|p| {
                let w = 2.0 * p.se_confidence;
                ((p.mean_confidence - w).max(0.0), (p.mean_confidence + w).min(1.0))
            })
            .collect()
    });
    Line {
        label: &s.strategy,
        points,
        band,
    }
}

fn file_stem(instance_id: &str) -> String {
    instance_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes `<instance>_confidence.svg`, `<instance>_rejections.svg` and
/// `<instance>_wall_ms.svg` per instance; returns the paths written.
pub fn emit_plots(rows: &[MetricRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let all = series(rows);
    let mut instances: Vec<&str> = Vec::new();
    for s in &all {
        if !instances.contains(&s.instance_id.as_str()) {
            instances.push(&s.instance_id);
        }
    }
    let mut written = Vec::new();
    for inst in instances {
        let group: Vec<&Series> = all
            .iter()
            .filter(|s| s.instance_id == inst && !s.points.is_empty())
            .collect();
        if group.is_empty() {
            log::warn!("no data for instance {inst}; skipping plots");
            continue;
        }
        let stem = file_stem(inst);
        let charts = [
            (
                "confidence",
                chart(
                    &format!("{inst}: posterior confidence (mean, 2 SE)"),
                    "P(best target identified)",
                    &group.iter().map(|s| line_of(s, |p| p.mean_confidence, true)).collect::<Vec<_>>(),
                    Some((0.0, 1.0)),
                ),
            ),
            (
                "rejections",
                chart(
                    &format!("{inst}: cumulative rejection draws"),
                    "mean draws",
                    &group.iter().map(|s| line_of(s, |p| p.mean_rejections, false)).collect::<Vec<_>>(),
                    None,
                ),
            ),
            (
                "wall_ms",
                chart(
                    &format!("{inst}: cumulative strategy time"),
                    "mean ms",
                    &group.iter().map(|s| line_of(s, |p| p.mean_wall_ms, false)).collect::<Vec<_>>(),
                    None,
                ),
            ),
        ];
        for (kind, svg) in charts {
            let path = out_dir.join(format!("{stem}_{kind}.svg"));
            std::fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok(written)
}
