//! Static two-panel line charts: output voltage on top, inductor current below.

use boost_dhp::harness::TraceRow;
use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const GAP: f64 = 60.0;
const MAX_POINTS: usize = 1500;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Panel {
    top: f64,
    y_label: &'static str,
    lo: f64,
    hi: f64,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

/// Overlay of several controllers' traces over the same scenario.
pub fn overlay(title: &str, series: &[(&str, &[TraceRow])]) -> String {
    let t_max = series.iter().filter_map(|(_, rows)| rows.last().map(|r| r.t)).fold(1e-6, f64::max);
    let (v_lo, v_hi) = bounds(series.iter().flat_map(|(_, rows)| rows.iter().flat_map(|r| [r.v_o, r.v_ref])));
    let (i_lo, i_hi) = bounds(series.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.i_l)));
    let panels = [
        Panel { top: MARGIN_TOP, y_label: "v_o (V)", lo: v_lo, hi: v_hi },
        Panel { top: MARGIN_TOP + PANEL_HEIGHT + GAP, y_label: "i_L (A)", lo: i_lo, hi: i_hi },
    ];
    let height = MARGIN_TOP + 2.0 * PANEL_HEIGHT + GAP + 50.0;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let x_of = |t: f64| MARGIN_LEFT + t / t_max * plot_w;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, WIDTH / 2.0);

    for (k, panel) in panels.iter().enumerate() {
        let y_of = |v: f64| panel.top + (panel.hi - v) / (panel.hi - panel.lo) * PANEL_HEIGHT;
        let bottom = panel.top + PANEL_HEIGHT;
        let _ = writeln!(s, r#"<rect x="{MARGIN_LEFT}" y="{}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="black"/>"#, panel.top);
        for v in ticks(panel.lo, panel.hi) {
            let y = y_of(v);
            let _ = writeln!(s, r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, MARGIN_LEFT + plot_w);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 6.0, y + 4.0, tick_label(v));
        }
        for t in ticks(0.0, t_max * 1e3) {
            let x = x_of(t * 1e-3);
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bottom + 16.0, tick_label(t));
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (ms)</text>"#, MARGIN_LEFT + plot_w / 2.0, bottom + 34.0);
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            panel.top + PANEL_HEIGHT / 2.0,
            panel.top + PANEL_HEIGHT / 2.0,
            panel.y_label
        );

        for (n, (label, rows)) in series.iter().enumerate() {
            let stride = (rows.len() / MAX_POINTS).max(1);
            let value = |r: &TraceRow| if k == 0 { r.v_o } else { r.i_l };
            let points: Vec<String> = rows.iter().step_by(stride).map(|r| format!("{:.2},{:.2}", x_of(r.t), y_of(value(r)))).collect();
            let color = COLORS[n % COLORS.len()];
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.join(" "));
            if k == 0 {
                let ly = panel.top + PANEL_HEIGHT - 14.0 - 16.0 * (series.len() - 1 - n) as f64;
                let lx = MARGIN_LEFT + plot_w - 110.0;
                let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 20.0, ly - 4.0);
                let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{label}</text>"#, lx + 26.0);
            }
        }
        if k == 0 {
            if let Some((_, rows)) = series.first() {
                let stride = (rows.len() / MAX_POINTS).max(1);
                let points: Vec<String> = rows.iter().step_by(stride).map(|r| format!("{:.2},{:.2}", x_of(r.t), y_of(r.v_ref))).collect();
                let _ = writeln!(s, r#"<polyline fill="none" stroke="gray" stroke-dasharray="6 4" points="{}"/>"#, points.join(" "));
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
