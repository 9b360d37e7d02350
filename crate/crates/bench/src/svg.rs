//! Minimal SVG line plots. Inputs are the parsed CSV tables, so every plot
//! can be regenerated from its table alone.

use std::fmt::Write;

use heatinv::Method;

use crate::study::{DecayRow, Row};

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    pub series: Vec<Series>,
    pub notes: Vec<String>,
}

fn tf(v: f64, s: Scale) -> Option<f64> {
    match s {
        Scale::Linear => v.is_finite().then_some(v),
        Scale::Log => (v > 0.0 && v.is_finite()).then(|| v.log10()),
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64, s: Scale) -> String {
    match s {
        Scale::Log => format!("1e{}", v.round() as i64),
        Scale::Linear => {
            if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
                format!("{v:.1e}")
            } else {
                format!("{}", (v * 1000.0).round() / 1000.0)
            }
        }
    }
}

fn ticks(lo: f64, hi: f64, s: Scale) -> Vec<f64> {
    match s {
        Scale::Log => {
            let (a, b) = (lo.floor() as i64, hi.ceil() as i64);
            let step = ((b - a) / 8).max(1);
            (a..=b).step_by(step as usize).map(|e| e as f64).filter(|&e| e >= lo - 1e-9 && e <= hi + 1e-9).collect()
        }
        Scale::Linear => {
            let span = (hi - lo).max(1e-300);
            let raw = span / 6.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(raw);
            let mut t = (lo / step).ceil() * step;
            let mut out = Vec::new();
            while t <= hi + 1e-12 * span {
                out.push(t);
                t += step;
            }
            out
        }
    }
}

impl Plot {
    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter_map(|&(x, y)| Some((tf(x, self.x_scale)?, tf(y, self.y_scale)?)))
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = pts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |(a, b, c, d), &(x, y)| {
                (a.min(x), b.max(x), c.min(y), d.max(y))
            });
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
        for t in ticks(x0, x1, self.x_scale) {
            let x = sx(t);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP + ph);
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 16.0,
                tick_label(t, self.x_scale)
            );
        }
        for t in ticks(y0, y1, self.y_scale) {
            let y = sy(t);
            let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                tick_label(t, self.y_scale)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );
        for (i, ser) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let coords: Vec<String> = ser
                .points
                .iter()
                .filter_map(|&(x, y)| Some((tf(x, self.x_scale)?, tf(y, self.y_scale)?)))
                .map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if coords.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.8"{dash} points="{}"/>"#,
                    coords.join(" ")
                );
            }
            for c in &coords {
                let (x, y) = c.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="2.8" fill="{color}"/>"#);
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#,
                lx + 20.0
            );
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 25.0, ly + 4.0, esc(&ser.label));
        }
        for (i, note) in self.notes.iter().enumerate() {
            let y = TOP + 18.0 * (self.series.len() as f64 + 1.0 + i as f64);
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{y}" font-size="11" fill="#333">{}</text>"##,
                LEFT + pw + 10.0,
                esc(note)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn methods_in(rows: &[Row]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for r in rows {
        if !out.contains(&r.method) {
            out.push(r.method);
        }
    }
    out
}

/// Log-log `E_u`, `E_p` against `N` with the last observed orders.
pub fn convergence_plot(rows: &[Row]) -> String {
    let d = rows.first().map(|r| r.d).unwrap_or(0);
    let mut series = Vec::new();
    let mut notes = Vec::new();
    for m in methods_in(rows) {
        let mine: Vec<&Row> = rows.iter().filter(|r| r.method == m && !r.failed()).collect();
        series.push(Series {
            label: format!("{m} E_u"),
            points: mine.iter().map(|r| (r.n as f64, r.e_u)).collect(),
            dashed: false,
        });
        series.push(Series {
            label: format!("{m} E_p"),
            points: mine.iter().map(|r| (r.n as f64, r.e_p)).collect(),
            dashed: true,
        });
        if let Some(r) = mine.iter().rev().find(|r| r.order_u.is_some()) {
            notes.push(format!("{m}: u {:.2}, p {:.2}", r.order_u.unwrap_or(f64::NAN), r.order_p.unwrap_or(f64::NAN)));
        }
    }
    Plot {
        title: format!("Convergence, d = {d}"),
        x_label: "N".into(),
        y_label: "relative error".into(),
        x_scale: Scale::Log,
        y_scale: Scale::Log,
        series,
        notes,
    }
    .render()
}

/// Wall time against achieved `E_p`.
pub fn cost_plot(rows: &[Row]) -> String {
    let d = rows.first().map(|r| r.d).unwrap_or(0);
    let series = methods_in(rows)
        .into_iter()
        .map(|m| Series {
            label: m.to_string(),
            points: rows.iter().filter(|r| r.method == m && !r.failed()).map(|r| (r.e_p, r.wall_time_s)).collect(),
            dashed: false,
        })
        .collect();
    Plot {
        title: format!("Cost, d = {d}"),
        x_label: "E_p".into(),
        y_label: "wall time [s]".into(),
        x_scale: Scale::Log,
        y_scale: Scale::Log,
        series,
        notes: vec![],
    }
    .render()
}

/// Semilog Krylov errors against the rank.
pub fn decay_plot(rows: &[DecayRow]) -> String {
    let pick = |f: &dyn Fn(&DecayRow) -> Option<f64>| rows.iter().filter_map(|r| Some((r.k as f64, f(r)?))).collect();
    Plot {
        title: "Krylov approximation error".into(),
        x_label: "k".into(),
        y_label: "relative error".into(),
        x_scale: Scale::Linear,
        y_scale: Scale::Log,
        series: vec![
            Series { label: "exp(-TA) b".into(), points: pick(&|r| Some(r.expm_error)), dashed: false },
            Series { label: "(I-exp(-TA))^-1 b".into(), points: pick(&|r| Some(r.geom_error)), dashed: false },
            Series { label: "bound".into(), points: pick(&|r| r.bound), dashed: true },
        ],
        notes: vec![],
    }
    .render()
}

/// Recovered and exact source along a line.
pub fn profile_plot(title: &str, xs: &[f64], approx: &[f64], exact: &[f64]) -> String {
    Plot {
        title: title.into(),
        x_label: "x_1".into(),
        y_label: "p".into(),
        x_scale: Scale::Linear,
        y_scale: Scale::Linear,
        series: vec![
            Series {
                label: "recovered".into(),
                points: xs.iter().cloned().zip(approx.iter().cloned()).collect(),
                dashed: false,
            },
            Series {
                label: "exact".into(),
                points: xs.iter().cloned().zip(exact.iter().cloned()).collect(),
                dashed: true,
            },
        ],
        notes: vec![],
    }
    .render()
}
