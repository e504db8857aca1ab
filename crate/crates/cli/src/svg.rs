//! SVG histogram of box areas before and after crop-and-resize.

use std::fmt::Write;

use focusdet::scenes::ScaleStats;

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;
const BINS: usize = 30;

fn histogram(log_areas: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut h = vec![0.0; BINS];
    if log_areas.is_empty() {
        return h;
    }
    let span = (hi - lo).max(1e-9);
    for &a in log_areas {
        let b = (((a - lo) / span) * BINS as f64) as usize;
        h[b.min(BINS - 1)] += 1.0;
    }
    let n = log_areas.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Normalized histograms of log10(area) for raw and cropped boxes.
pub fn area_svg(stats: &ScaleStats) -> String {
    let logs = |v: &[(u32, f64)]| -> Vec<f64> { v.iter().filter(|(_, a)| *a > 0.0).map(|(_, a)| a.log10()).collect() };
    let raw = logs(&stats.raw_areas);
    let cropped = logs(&stats.cropped_areas);
    let lo = raw.iter().chain(&cropped).copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().chain(&cropped).copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let hr = histogram(&raw, lo, hi);
    let hc = histogram(&cropped, lo, hi);
    let top = hr.iter().chain(&hc).copied().fold(1e-9, f64::max);

    let x = |i: f64| PAD + i / BINS as f64 * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - v / top * (H - 2.0 * PAD);
    let line = |h: &[f64]| -> String {
        h.iter()
            .enumerate()
            .map(|(i, v)| format!("{:.1},{:.1}", x(i as f64 + 0.5), y(*v)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let cv = |c: Option<f64>| c.map_or("n/a".to_string(), |v| format!("{v:.3}"));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#d62728" stroke-width="2" points="{}"/>"##, line(&hr));
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##, line(&hc));
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">log10 area {lo:.2}</text>"#, H - 12.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{hi:.2}</text>"#, W - PAD, H - 12.0);
    let _ = writeln!(
        s,
        r##"<text x="{}" y="24" fill="#d62728">raw (cv {})</text><text x="{}" y="24" fill="#1f77b4">cropped (cv {})</text>"##,
        PAD,
        cv(stats.pooled.cv_raw),
        PAD + 200.0,
        cv(stats.pooled.cv_cropped)
    );
    s.push_str("</svg>\n");
    s
}
