//! Log-scale plot of the measured splitting against distance, written as
//! plain SVG.

use std::fmt::Write;

use crate::harness::{ExpFit, LadderReport};

const W: f64 = 800.0;
const H: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;

struct Series {
    title: String,
    label: &'static str,
    points: Vec<(f64, f64)>,
    fit: Option<ExpFit>,
    /// `(prefactor, rate)` of the asymptotic law.
    theory: Option<(f64, f64)>,
}

fn pick(report: &LadderReport) -> Option<Series> {
    for (k, c) in report.clusters.iter().enumerate() {
        let s = &report.series[k];
        if !s.gaps.is_empty() {
            return Some(Series {
                title: format!("splitting near lambda* = {:.6}", c.lambda_star),
                label: "gap",
                points: s.gaps.iter().map(|p| (p[0], p[1])).collect(),
                fit: s.gap_fit,
                theory: match (c.beta_minus, c.beta_plus, c.p_minus, c.p_plus) {
                    (Some(a), Some(b), 1, 1) => Some((4.0 * (a * b).abs() * c.s, 2.0 * c.s)),
                    _ => None,
                },
            });
        }
        if !s.shifts.is_empty() {
            let beta = c.beta_minus.or(c.beta_plus).unwrap_or(0.0);
            return Some(Series {
                title: format!("shift of lambda* = {:.6}", c.lambda_star),
                label: "|shift|",
                points: s.shifts.iter().map(|p| (p[0], p[1].abs())).collect(),
                fit: s.shift_fit,
                theory: c.beta_tilde.map(|bt| (2.0 * c.s * beta * beta * bt.abs(), 4.0 * c.s)),
            });
        }
    }
    None
}

fn frame(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{title}</text>"#, W / 2.0);
}

/// Measured gaps (or one-sided shifts) on a log scale with the fitted and the
/// asymptotic exponential.
pub fn ladder_svg(report: &LadderReport) -> String {
    let mut out = String::new();
    let Some(series) = pick(report).filter(|s| s.points.iter().any(|p| p.1 > 0.0)) else {
        frame(&mut out, "no splitting data");
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">no cluster has two members or a shift</text>"#, W / 2.0, H / 2.0);
        out.push_str("</svg>\n");
        return out;
    };
    frame(&mut out, &series.title);
    let pts: Vec<(f64, f64)> = series.points.iter().copied().filter(|p| p.1 > 0.0).collect();
    let x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 0.5;
    let x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 0.5;
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
    for l in [x0, x1] {
        if let Some(f) = series.fit {
            ys.push(f.eval(l).log10());
        }
        if let Some((a, r)) = series.theory {
            if a > 0.0 {
                ys.push((a * (-r * l).exp()).log10());
            }
        }
    }
    let y0 = ys.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let mut y1 = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil();
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * (H - TOP - BOTTOM);

    let (bx, by) = (LEFT, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    let mut d = y0;
    while d <= y1 + 1e-9 {
        let y = py(d);
        let _ = writeln!(out, r##"<line x1="{bx}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, bx - 8.0, y + 4.0);
        d += 1.0;
    }
    let mut t = x0.ceil();
    while t <= x1 {
        let x = px(t);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{by}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, by + 5.0);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#, by + 22.0);
        t += 1.0;
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">l</text>"#, (LEFT + W - RIGHT) / 2.0, H - 20.0);
    let _ = writeln!(
        out,
        r#"<text x="25" y="{:.2}" text-anchor="middle" transform="rotate(-90 25 {:.2})">{}</text>"#,
        (TOP + by) / 2.0,
        (TOP + by) / 2.0,
        series.label
    );

    let line = |out: &mut String, a: f64, r: f64, color: &str, dash: &str| {
        let (ya, yb) = ((a * (-r * x0).exp()).log10(), (a * (-r * x1).exp()).log10());
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            px(x0),
            py(ya),
            px(x1),
            py(yb)
        );
    };
    let mut legend = Vec::new();
    if let Some(f) = series.fit {
        line(&mut out, f.prefactor, f.rate, "#1f77b4", "");
        legend.push(("#1f77b4", format!("fit: rate {:.4}", f.rate)));
    }
    if let Some((a, r)) = series.theory.filter(|t| t.0 > 0.0) {
        line(&mut out, a, r, "#d62728", r#" stroke-dasharray="8 5""#);
        legend.push(("#d62728", format!("asymptotic: rate {r:.4}")));
    }
    for (x, y) in &pts {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="black"/>"#, px(*x), py(y.log10()));
    }
    legend.insert(0, ("black", format!("measured {}", series.label)));
    for (i, (color, text)) in legend.iter().enumerate() {
        let y = TOP + 20.0 + 20.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="14" height="4" fill="{color}"/>"#, W - RIGHT - 230.0, y - 6.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}">{text}</text>"#, W - RIGHT - 210.0);
    }
    out.push_str("</svg>\n");
    out
}
