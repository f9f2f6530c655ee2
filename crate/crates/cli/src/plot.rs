//! Self-contained SVG log-log plots of rate reports.

use std::fmt::Write;

use levy_bsde::rates::RateReport;

const W: f64 = 640.0;
const H: f64 = 440.0;
const PAD: f64 = 64.0;

pub fn rate_svg(r: &RateReport, title: &str) -> String {
    let xs: Vec<f64> = r.levels.iter().map(|&n| (n as f64).log2()).collect();
    let lo_err = |i: usize| (r.errors[i].mean - 2.0 * r.errors[i].se).max(r.errors[i].mean * 0.5);
    let mut ys: Vec<f64> = (0..xs.len()).map(|i| lo_err(i).log2()).collect();
    ys.extend(r.errors.iter().map(|e| (e.mean + 2.0 * e.se).log2()));
    ys.extend(r.bound_curve.iter().map(|b| b.log2()));
    let (x0, x1) = (xs[0] - 0.25, xs[xs.len() - 1] + 0.25);
    let (y0, y1) = (ys.iter().cloned().fold(f64::INFINITY, f64::min) - 0.25, ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.25);
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    // axes and integer ticks
    let _ = write!(
        s,
        r#"<path d="M{PAD},{} H{} M{PAD},{} V{PAD}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    );
    for k in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let x = px(k as f64);
        let _ = write!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{k}</text>"#, H - PAD + 16.0);
    }
    for k in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let y = py(k as f64);
        let _ = write!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{k}</text>"#, PAD - 6.0, y + 4.0);
    }
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">log2 n</text>"#, W / 2.0, H - 20.0);
    let _ = write!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">log2 error (theory slope {:.3})</text>"#,
        H / 2.0,
        H / 2.0,
        r.theory_slope
    );
    // bound as reference line
    let pts: Vec<String> = xs.iter().zip(&r.bound_curve).map(|(x, b)| format!("{:.1},{:.1}", px(*x), py(b.log2()))).collect();
    let _ = write!(s, r#"<polyline points="{}" stroke="gray" stroke-dasharray="6 4" fill="none"/>"#, pts.join(" "));
    // fitted line
    let f = |x: f64| r.fit.intercept + r.fit.slope * x;
    let _ = write!(
        s,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#1f77b4"/>"##,
        px(xs[0]),
        py(f(xs[0])),
        px(xs[xs.len() - 1]),
        py(f(xs[xs.len() - 1]))
    );
    for (i, x) in xs.iter().enumerate() {
        let e = r.errors[i];
        let (cx, cy) = (px(*x), py(e.mean.log2()));
        let _ = write!(
            s,
            r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#d62728"/><circle cx="{cx:.1}" cy="{cy:.1}" r="3.5" fill="#d62728"/>"##,
            py(lo_err(i).log2()),
            py((e.mean + 2.0 * e.se).log2())
        );
    }
    let _ = write!(
        s,
        r##"<text x="{}" y="{}" text-anchor="end" fill="#1f77b4">fitted slope {:.3} [{:.3}, {:.3}]</text>"##,
        W - PAD,
        PAD,
        r.fit.slope,
        r.fit.ci.0,
        r.fit.ci.1
    );
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="end" fill="gray">bound</text>"#, W - PAD, PAD + 16.0);
    s.push_str("</svg>\n");
    s
}
