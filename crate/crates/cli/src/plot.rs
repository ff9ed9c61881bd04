//! Static SVG renderings: the bifurcation diagram and orbit curves.

use std::fmt::Write as _;

use choreo_core::archive::EightSummary;
use choreo_core::continuation::BranchRecord;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 64.0;

const SEGMENT_COLORS: [&str; 3] = ["#1f4e9c", "#c0392b", "#8c8c8c"];
const BODY_COLORS: [&str; 8] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#16a085", "#7f8c8d", "#b7950b"];

/// Linear map from data bounds to the plotting area.
#[derive(Clone, Copy, Debug)]
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = x;
        for (a, b) in points {
            if a.is_finite() && b.is_finite() {
                x = (x.0.min(a), x.1.max(a));
                y = (y.0.min(b), y.1.max(b));
            }
        }
        if !x.0.is_finite() {
            return Self { x: (0.0, 1.0), y: (0.0, 1.0) };
        }
        let pad = |(lo, hi): (f64, f64)| {
            let span = hi - lo;
            let p = if span > 0.0 { 0.05 * span } else { 0.5 * lo.abs().max(1.0) };
            (lo - p, hi + p)
        };
        Self { x: pad(x), y: pad(y) }
    }

    /// Same scale on both axes, for orbit pictures.
    fn isotropic(self) -> Self {
        let (w, h) = (self.x.1 - self.x.0, self.y.1 - self.y.0);
        let aspect = (WIDTH - 2.0 * MARGIN) / (HEIGHT - 2.0 * MARGIN);
        let grow = |(lo, hi): (f64, f64), to: f64| {
            let c = 0.5 * (lo + hi);
            (c - 0.5 * to, c + 0.5 * to)
        };
        if w / h > aspect {
            Self { x: self.x, y: grow(self.y, w / aspect) }
        } else {
            Self { x: grow(self.x, h * aspect), y: self.y }
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    if !(raw > 0.0) {
        return vec![lo];
    }
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|f| f * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (MARGIN, WIDTH - MARGIN);
    let (y0, y1) = (HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<g stroke="black" stroke-width="1" fill="none"><path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}"/></g>"#);
    for t in ticks(f.x.0, f.x.1) {
        let x = f.px(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + 5.0, y0 + 18.0, fmt_tick(t));
    }
    for t in ticks(f.y.0, f.y.1) {
        let y = f.py(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 5.0, x0 - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 18.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn polyline(s: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, dashed: bool) {
    if pts.is_empty() {
        return;
    }
    let mut d = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, f.px(*x), f.py(*y));
    }
    let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
    let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#, d.trim_end());
}

fn dot(s: &mut String, f: &Frame, (x, y): (f64, f64), r: f64, fill: &str, label: &str) {
    let _ = writeln!(
        s,
        r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{fill}" stroke="black" stroke-width="0.8"><title>{}</title></circle>"#,
        f.px(x),
        f.py(y),
        escape(label)
    );
}

/// ω against the amplitude measure, one polyline per segment. The polygon
/// is a black dot, the eight a green one, the first point of the switched
/// branch a hollow ring, and Morse indices are written where they change.
pub fn diagram(records: &[BranchRecord], eight: Option<&EightSummary>, title: &str) -> String {
    let pts = records.iter().map(|r| (r.omega, r.amplitude)).chain(eight.map(|e| (e.omega, e.amplitude)));
    let f = Frame::fit(pts);
    let mut s = header(title);
    axes(&mut s, &f, "ω", "amplitude");
    let mut segments: Vec<usize> = records.iter().map(|r| r.segment).collect();
    segments.dedup();
    for seg in segments {
        let pts: Vec<(f64, f64)> = records.iter().filter(|r| r.segment == seg).map(|r| (r.omega, r.amplitude)).collect();
        polyline(&mut s, &f, &pts, SEGMENT_COLORS[seg.min(2)], seg >= 2);
    }
    let mut last_index = None;
    for r in records.iter().filter(|r| r.morse_index.is_some()) {
        if r.morse_index != last_index {
            let _ = writeln!(
                s,
                r##"<text x="{:.2}" y="{:.2}" fill="#444" font-size="11">{}</text>"##,
                f.px(r.omega) + 4.0,
                f.py(r.amplitude) - 4.0,
                r.morse_index.unwrap_or(0)
            );
            last_index = r.morse_index;
        }
    }
    if let Some(r) = records.iter().find(|r| r.segment >= 1) {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="6" fill="none" stroke="#e67e22" stroke-width="2"><title>branch switch, step {}</title></circle>"##,
            f.px(r.omega),
            f.py(r.amplitude),
            r.step
        );
    }
    if let Some(r) = records.iter().find(|r| r.step == 0) {
        dot(&mut s, &f, (r.omega, r.amplitude), 5.0, "black", "polygon");
    }
    if let Some(e) = eight {
        dot(&mut s, &f, (e.omega, e.amplitude), 5.0, "#27ae60", "figure eight");
    }
    s.push_str("</svg>\n");
    s
}

/// Projection of 3D points onto their two leading principal directions.
pub fn project(curves: &[Vec<[f64; 3]>]) -> Vec<Vec<(f64, f64)>> {
    let all: Vec<&[f64; 3]> = curves.iter().flatten().collect();
    if all.is_empty() {
        return curves.iter().map(|_| Vec::new()).collect();
    }
    let k = all.len() as f64;
    let mean = all.iter().fold([0.0; 3], |a, p| [a[0] + p[0] / k, a[1] + p[1] / k, a[2] + p[2] / k]);
    let cov = faer::Mat::<f64>::from_fn(3, 3, |a, b| all.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>());
    let axes = match cov.self_adjoint_eigen(faer::Side::Lower) {
        Ok(eig) => {
            let u = eig.U();
            [[u[(0, 2)], u[(1, 2)], u[(2, 2)]], [u[(0, 1)], u[(1, 1)], u[(2, 1)]]]
        }
        Err(_) => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };
    curves
        .iter()
        .map(|c| {
            c.iter()
                .map(|p| {
                    let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
                    let dot = |a: &[f64; 3]| a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
                    (dot(&axes[0]), dot(&axes[1]))
                })
                .collect()
        })
        .collect()
}

/// Closed curve of every body with its position at `t = 0` marked.
pub fn orbit(curves: &[Vec<[f64; 3]>], title: &str) -> String {
    let flat = project(curves);
    let f = Frame::fit(flat.iter().flatten().copied()).isotropic();
    let mut s = header(title);
    for (j, c) in flat.iter().enumerate() {
        let mut closed = c.clone();
        if let Some(first) = c.first() {
            closed.push(*first);
        }
        polyline(&mut s, &f, &closed, BODY_COLORS[j % BODY_COLORS.len()], false);
    }
    for (j, c) in flat.iter().enumerate() {
        if let Some(p) = c.first() {
            dot(&mut s, &f, *p, 3.5, BODY_COLORS[j % BODY_COLORS.len()], &format!("body {}", j + 1));
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: usize, segment: usize, omega: f64, amplitude: f64, morse: Option<usize>) -> BranchRecord {
        BranchRecord {
            step,
            segment,
            omega,
            arclength: 0.0,
            amplitude,
            det_sign: 1,
            condition: None,
            residual: 0.0,
            newton_iterations: 0,
            step_size: 0.0,
            morse_index: morse,
            state_ref: String::new(),
        }
    }

    #[test]
    fn empty_diagram_is_valid_svg_with_axes() {
        let s = diagram(&[], None, "empty");
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert!(s.contains("<path d=\"M"));
        assert!(!s.contains("<circle"));
    }

    #[test]
    fn diagram_marks_polygon_switch_and_eight() {
        let records = vec![
            rec(0, 0, 0.76, 0.0, None),
            rec(1, 0, 0.75, 0.1, Some(2)),
            rec(2, 1, 0.72, 0.3, Some(1)),
            rec(3, 1, 1.2, 0.5, Some(1)),
        ];
        let eight = EightSummary {
            omega: 1.5,
            p: Some(2),
            q: Some(1),
            residual: 0.0,
            newton_iterations: 2,
            bracket: (2, 3),
            amplitude: 0.6,
            spectral_tail: 0.0,
            file: String::new(),
        };
        let s = diagram(&records, Some(&eight), "n = 3");
        assert!(s.contains(r#"fill="black""#));
        assert!(s.contains(r##"fill="#27ae60""##));
        assert!(s.contains("branch switch, step 2"));
        assert_eq!(s.matches("stroke-width=\"1.6\"").count(), 2);
        // indices 2 and 1 are written once each
        assert_eq!(s.matches(r##"fill="#444""##).count(), 2);
    }

    #[test]
    fn ticks_are_round_numbers() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(fmt_tick(0.6000000000000001), "0.6");
        assert_eq!(ticks(2.0, 2.0), vec![2.0]);
    }

    #[test]
    fn projection_keeps_a_planar_curve_planar() {
        // a circle tilted out of the xy-plane projects to a circle
        let c: Vec<[f64; 3]> = (0..32)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 32.0;
                [t.cos(), t.sin() * 0.6, t.sin() * 0.8]
            })
            .collect();
        let p = project(&[c]);
        for (x, y) in &p[0] {
            assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-12);
        }
        let s = orbit(&[vec![[0.0, 0.0, 0.0]; 4]], "degenerate");
        assert!(s.contains("body 1"));
    }
}
