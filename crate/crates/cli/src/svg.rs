//! Standalone SVG colormap of a value on the `(f, g)` grid.

use std::fmt::Write as _;

use aoii::grid::GridFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

// Viridis sampled at eight points.
const STOPS: [(f64, f64, f64); 8] = [
    (68.0, 1.0, 84.0),
    (70.0, 50.0, 127.0),
    (54.0, 92.0, 141.0),
    (39.0, 127.0, 142.0),
    (31.0, 161.0, 135.0),
    (74.0, 194.0, 109.0),
    (159.0, 218.0, 58.0),
    (253.0, 231.0, 37.0),
];

pub fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let w = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |u: f64, v: f64| (u + (v - u) * w).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Maps each value to `[0, 1]`. Under the log scale non-positive values sit
/// at the bottom of the range.
fn normalized(values: &[f64], scale: Scale) -> (Vec<f64>, f64, f64) {
    let mapped: Vec<f64> = match scale {
        Scale::Linear => values.to_vec(),
        Scale::Log => values.iter().map(|&v| if v > 0.0 { v.log10() } else { f64::NEG_INFINITY }).collect(),
    };
    let finite = mapped.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let t = mapped.iter().map(|v| if v.is_finite() { (v - lo) / span } else { 0.0 }).collect();
    (t, lo, hi)
}

/// Age runs along the x axis and error up the y axis; states outside the
/// state space are left blank.
pub fn render(file: &GridFile, scale: Scale) -> String {
    let space = file.space();
    let (f_cap, g_cap) = (space.max_age(), space.max_error());
    let cell = (720.0 / (f_cap + 1) as f64).clamp(2.0, 40.0);
    let (left, top, bar) = (60.0, 30.0, 70.0);
    let width = left + cell * (f_cap + 1) as f64 + bar;
    let height = top + cell * (g_cap + 1) as f64 + 50.0;
    let (t, lo, hi) = normalized(&file.values, scale);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.1} {height:.1}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, s) in space.states().iter().enumerate() {
        let x = left + cell * s.age as f64;
        let y = top + cell * (g_cap - s.error) as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}"><title>f={} g={} value={}</title></rect>"#,
            color(t[i]),
            s.age,
            s.error,
            file.values[i]
        );
    }
    let plot_bottom = top + cell * (g_cap + 1) as f64;
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">age f (0..{f_cap})</text>"#,
        left + cell * (f_cap + 1) as f64 / 2.0,
        plot_bottom + 30.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">error g (0..{g_cap})</text>"#,
        top + (plot_bottom - top) / 2.0,
        top + (plot_bottom - top) / 2.0
    );

    let bar_x = width - bar + 15.0;
    let bar_h = plot_bottom - top;
    for k in 0..64 {
        let y = top + bar_h * (1.0 - (k + 1) as f64 / 64.0);
        let _ = writeln!(
            svg,
            r#"<rect x="{bar_x:.1}" y="{y:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            bar_h / 64.0 + 0.5,
            color(k as f64 / 63.0)
        );
    }
    let label = |v: f64| match scale {
        Scale::Linear => format!("{v:.3}"),
        Scale::Log => format!("1e{v:.1}"),
    };
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bar_x, top - 8.0, label(hi));
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bar_x, plot_bottom + 16.0, label(lo));
    svg.push_str("</svg>\n");
    svg
}
