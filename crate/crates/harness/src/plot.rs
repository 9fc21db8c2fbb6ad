//! Minimal SVG output: line charts and heatmaps. Every figure is written next
//! to a CSV holding its raw values.

use std::fmt::Write as _;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub width: f64,
    pub opacity: f64,
    /// Draw points instead of a line.
    pub markers: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, color: &'static str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { name: name.into(), color, x, y, width: 1.5, opacity: 1.0, markers: false }
    }

    pub fn points(name: impl Into<String>, color: &'static str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { markers: true, ..Self::line(name, color, x, y) }
    }

    pub fn faint(mut self, width: f64, opacity: f64) -> Self {
        self.width = width;
        self.opacity = opacity;
        self
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Line chart of several series on shared axes. Only the first series of
/// each name enters the legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y.iter().copied()));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(fx), TOP + ph + 15.0, tick(fx));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 5.0, py(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 10.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        esc(y_label)
    );
    for ser in series {
        let pts: Vec<(f64, f64)> = ser
            .x
            .iter()
            .zip(&ser.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| (px(x), py(y)))
            .collect();
        if ser.markers {
            for (x, y) in pts {
                let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="2.5" fill="{}" fill-opacity="{}"/>"#, ser.color, ser.opacity);
            }
        } else if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{}" stroke-opacity="{}"/>"#,
                path.join(" "),
                ser.color,
                ser.width,
                ser.opacity
            );
        }
    }
    let mut seen: Vec<&str> = Vec::new();
    for ser in series {
        if seen.contains(&ser.name.as_str()) {
            continue;
        }
        let y = TOP + 12.0 + 14.0 * seen.len() as f64;
        seen.push(&ser.name);
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="3" fill="{}"/>"#, LEFT + pw - 130.0, y - 4.0, ser.color);
        let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, LEFT + pw - 115.0, esc(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

const STOPS: [(f64, [f64; 3]); 5] = [
    (0.0, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.5, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.0, [253.0, 231.0, 37.0]),
];

fn colormap(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let k = STOPS.iter().position(|s| s.0 >= t).unwrap_or(STOPS.len() - 1).max(1);
    let (a, b) = (STOPS[k - 1], STOPS[k]);
    let f = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] + f * (b.1[i] - a.1[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Cell `(i, j)` of `values` sits at `j * nx + i`; `j = 0` is drawn at the
/// bottom. Colours span `[lo, hi]`.
pub fn heatmap(title: &str, values: &[f64], nx: usize, ny: usize, lo: f64, hi: f64) -> String {
    let side = 320.0;
    let cell = side / nx.max(ny) as f64;
    let (w, h) = (cell * nx as f64, cell * ny as f64);
    let (ox, oy) = (20.0, 40.0);
    let total_w = ox + w + 90.0;
    let total_h = oy + h + 20.0;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w:.0}" height="{total_h:.0}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{total_w:.0}" height="{total_h:.0}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, ox + w / 2.0, esc(title));
    for j in 0..ny {
        for i in 0..nx {
            let v = values[j * nx + i];
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                ox + i as f64 * cell,
                oy + (ny - 1 - j) as f64 * cell,
                cell + 0.05,
                cell + 0.05,
                colormap((v - lo) / span)
            );
        }
    }
    let bx = ox + w + 15.0;
    for k in 0..50 {
        let t = 1.0 - k as f64 / 50.0;
        let _ = writeln!(s, r#"<rect x="{bx:.1}" y="{:.2}" width="15" height="{:.2}" fill="{}"/>"#, oy + k as f64 * h / 50.0, h / 50.0 + 0.1, colormap(t));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bx + 20.0, oy + 8.0, tick(hi));
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, bx + 20.0, oy + h, tick(lo));
    s.push_str("</svg>\n");
    s
}

/// Field values as an `i,j,value` table.
pub fn field_csv(values: &[f64], nx: usize) -> String {
    let mut s = String::from("i,j,value\n");
    for (k, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{},{},{v}", k % nx, k / nx);
    }
    s
}

/// CSV with a header row; every row must match the header width.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Writes `<stem>.svg` and `<stem>.csv` into `dir`.
pub fn write_figure(dir: &Path, stem: &str, svg: &str, csv: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.svg")), svg)?;
    std::fs::write(dir.join(format!("{stem}.csv")), csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_ends() {
        assert_eq!(colormap(0.0), "#440154");
        assert_eq!(colormap(1.0), "#fde725");
        assert_eq!(colormap(f64::NAN), "#440154");
    }

    #[test]
    fn degenerate_bounds_are_widened() {
        let (a, b) = bounds([3.0, 3.0].into_iter());
        assert!(a < 3.0 && b > 3.0);
    }
}
