// Copyright 2026 The hetpilot Authors
// SPDX-License-Identifier: Apache-2.0

//! Minimal static SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::report::Reports;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
}

fn frame(title: &str, x_label: &str, y_label: &str, y_max: f64) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{cx}" y="20" text-anchor="middle" font-size="14">{title}</text>
<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>
<text x="{cx}" y="{xl}" text-anchor="middle">{x_label}</text>
<text x="14" y="{cy}" transform="rotate(-90 14 {cy})" text-anchor="middle">{y_label}</text>
<text x="{ty}" y="{PAD}" text-anchor="end">{y_max:.3}</text>
<text x="{ty}" y="{b}" text-anchor="end">0</text>
"##,
        cx = W / 2.0,
        cy = H / 2.0,
        b = H - PAD,
        r = W - PAD / 2.0,
        xl = H - 12.0,
        ty = PAD - 4.0,
    );
    s
}

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let x_max = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).fold(0.0, f64::max).max(1e-9);
    let y_max = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).fold(0.0, f64::max).max(1e-9);
    let mut s = frame(title, x_label, y_label, y_max);
    let sx = |x: f64| PAD + x / x_max * (W - 1.5 * PAD);
    let sy = |y: f64| H - PAD - y / y_max * (H - 2.0 * PAD);
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(s, r#"<text x="{}" y="{}" fill="{color}">{}</text>"#, W - 120.0, PAD + 16.0 * i as f64, ser.label);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{x_max:.0}</text>"#, W - PAD / 2.0, H - PAD + 16.0);
    s.push_str("</svg>\n");
    s
}

fn bar_chart(title: &str, y_label: &str, bars: &[(&str, f64)]) -> String {
    let y_max = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(1e-9);
    let mut s = frame(title, "", y_label, y_max);
    let slot = (W - 1.5 * PAD) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = v / y_max * (H - 2.0 * PAD);
        let x = PAD + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
            H - PAD - h,
            slot * 0.7,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{label}</text>"#, x + slot * 0.35, H - PAD + 16.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_all(dir: &Path, r: &Reports) -> std::io::Result<()> {
    let u = &r.utilization;
    let util = line_chart(
        "Resource utilization",
        "time (s)",
        "fraction busy",
        &[
            Series { label: "cpu", points: u.timeline.iter().map(|p| (p.t_s, p.cpu)).collect() },
            Series { label: "gpu", points: u.timeline.iter().map(|p| (p.t_s, p.gpu)).collect() },
        ],
    );
    fs::write(dir.join("utilization.svg"), util)?;
    let rate = line_chart(
        "Completion rate",
        "time (s)",
        "items per hour",
        &[Series { label: "rate", points: r.rate.points.iter().map(|p| (p.t_s, p.per_hour)).collect() }],
    );
    fs::write(dir.join("rate.svg"), rate)?;
    let p = &r.overhead.parts;
    let secs = |us: u64| us as f64 / 1e6;
    let bars = [
        ("startup", secs(p.startup_us)),
        ("scheduling", secs(p.scheduling_us)),
        ("launch", secs(p.launch_delay_us)),
        ("idle", secs(p.idle_gaps_us)),
        ("teardown", secs(p.teardown_us)),
    ];
    fs::write(dir.join("overhead.svg"), bar_chart("Overhead by phase", "seconds", &bars))
}
