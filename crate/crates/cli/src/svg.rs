use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
/// Columns used when thinning long series; each keeps its min and max.
const BINS: usize = 1000;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
/// Floor applied to values on a log axis
const LOG_FLOOR: f64 = 1e-12;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_y: bool,
    /// optional vertical marker, e.g. a settling-time bound
    pub marker: Option<(f64, &'a str)>,
}

fn thin(points: &[(f64, f64)], x0: f64, x1: f64) -> Vec<(f64, f64)> {
    if points.len() <= 2 * BINS {
        return points.to_vec();
    }
    let mut out = Vec::with_capacity(2 * BINS + 2);
    let width = (x1 - x0) / BINS as f64;
    let mut i = 0;
    for b in 0..BINS {
        let end = if b + 1 == BINS { f64::INFINITY } else { x0 + (b + 1) as f64 * width };
        let start = i;
        while i < points.len() && points[i].0 < end {
            i += 1;
        }
        if i == start {
            continue;
        }
        let chunk = &points[start..i];
        let (mut lo, mut hi) = (0, 0);
        for (k, p) in chunk.iter().enumerate() {
            if p.1 < chunk[lo].1 {
                lo = k;
            }
            if p.1 > chunk[hi].1 {
                hi = k;
            }
        }
        let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        out.push(chunk[a]);
        if b != a {
            out.push(chunk[b]);
        }
    }
    if out.last() != points.last() {
        out.push(*points.last().unwrap());
    }
    out
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-300);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders the series as SVG polylines. Output is a pure function of the input.
pub fn render(plot: &Plot, series: &[Series]) -> String {
    let tf = |y: f64| if plot.log_y { y.max(LOG_FLOOR).log10() } else { y };
    let all = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(tf(y));
        y1 = y1.max(tf(y));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    if plot.log_y {
        y0 = y0.floor();
        y1 = y1.ceil();
    }
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(plot.title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{MARGIN_T}" stroke="#ddd"/>"##, MARGIN_T + ph);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MARGIN_T + ph + 16.0, fmt_tick(t));
    }
    let y_ticks: Vec<f64> = if plot.log_y {
        let (a, b) = (y0 as i32, y1 as i32);
        let stride = ((b - a) / 8).max(1);
        (a..=b).step_by(stride as usize).map(f64::from).collect()
    } else {
        nice_ticks(y0, y1)
    };
    for t in y_ticks {
        let y = sy(t);
        let label = if plot.log_y { format!("1e{}", t as i32) } else { fmt_tick(t) };
        let _ = writeln!(s, r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, MARGIN_L + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, MARGIN_L - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0,
        escape(plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(plot.y_label)
    );
    if let Some((mx, label)) = plot.marker {
        if mx >= x0 && mx <= x1 {
            let x = sx(mx);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{MARGIN_T}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-dasharray="5,4"/>"#,
                MARGIN_T + ph
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 4.0, MARGIN_T + 14.0, escape(label));
        }
    }
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts = thin(&ser.points, x0, x1);
        let mut path = String::with_capacity(pts.len() * 16);
        for (x, y) in pts.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = write!(path, "{:.2},{:.2} ", sx(*x), sy(tf(*y)));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"><title>{}</title></polyline>"#,
            path.trim_end(),
            escape(&ser.label)
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_keeps_extremes_and_endpoints() {
        let pts: Vec<(f64, f64)> = (0..100_000).map(|i| (i as f64, if i == 51_234 { 9.0 } else { (i % 7) as f64 })).collect();
        let t = thin(&pts, 0.0, 99_999.0);
        assert!(t.len() <= 2 * BINS + 2);
        assert!(t.contains(&(51_234.0, 9.0)));
        assert_eq!(t.first(), pts.first());
        assert_eq!(t.last(), pts.last());
    }

    #[test]
    fn render_is_deterministic_and_handles_log_axis() {
        let series = vec![Series {
            label: "a<b".into(),
            points: vec![(0.0, 1.0), (1.0, 1e-3), (2.0, 0.0)],
        }];
        let plot = Plot {
            title: "t",
            x_label: "x",
            y_label: "y",
            log_y: true,
            marker: Some((1.5, "bound")),
        };
        let a = render(&plot, &series);
        assert_eq!(a, render(&plot, &series));
        assert!(a.contains("<polyline") && a.contains("a&lt;b") && a.contains("1e-12"));
        assert!(!a.contains("NaN") && !a.contains("inf"));
    }
}
