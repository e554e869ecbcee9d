//! Minimal SVG heatmap with axes.

use std::fmt::Write;

pub struct Heatmap<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x_values: &'a [f64],
    pub y_values: &'a [f64],
    /// Row-major over y then x; values are −1, 0 or 1, NaN for failures.
    pub cells: &'a [f64],
    /// Optional curve drawn on top, in data coordinates.
    pub overlay: Vec<(f64, f64)>,
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const BOTTOM: f64 = 50.0;
const TOP: f64 = 40.0;
const RIGHT: f64 = 20.0;

fn span(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn colour(v: f64) -> &'static str {
    if v.is_nan() {
        "#bbbbbb"
    } else if v > 0.0 {
        "#d7301f"
    } else if v < 0.0 {
        "#2b8cbe"
    } else {
        "#ffffff"
    }
}

impl Heatmap<'_> {
    pub fn render(&self) -> String {
        let (nx, ny) = (self.x_values.len().max(1), self.y_values.len().max(1));
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let (cw, ch) = (pw / nx as f64, ph / ny as f64);
        let (x0, x1) = span(self.x_values);
        let (y0, y1) = span(self.y_values);
        // cell centres sit at the grid values; the frame extends half a cell
        let dx = if nx > 1 { (x1 - x0) / (nx - 1) as f64 } else { x1 - x0 };
        let dy = if ny > 1 { (y1 - y0) / (ny - 1) as f64 } else { y1 - y0 };
        let (fx0, fx1) = if nx > 1 { (x0 - dx / 2.0, x1 + dx / 2.0) } else { (x0, x1) };
        let (fy0, fy1) = if ny > 1 { (y0 - dy / 2.0, y1 + dy / 2.0) } else { (y0, y1) };
        let px = |x: f64| LEFT + (x - fx0) / (fx1 - fx0) * pw;
        let py = |y: f64| TOP + ph - (y - fy0) / (fy1 - fy0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, self.title);
        for j in 0..ny {
            for i in 0..nx {
                let v = self.cells.get(j * nx + i).copied().unwrap_or(f64::NAN);
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    LEFT + i as f64 * cw,
                    TOP + ph - (j + 1) as f64 * ch,
                    cw,
                    ch,
                    colour(v)
                );
            }
        }
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let xv = fx0 + t * (fx1 - fx0);
            let yv = fy0 + t * (fy1 - fy0);
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="black"/><text x="{0:.2}" y="{3}" font-size="10" text-anchor="middle">{4:.3}</text>"#,
                px(xv),
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                xv
            );
            let _ = writeln!(
                s,
                r#"<line x1="{0}" y1="{1:.2}" x2="{2}" y2="{1:.2}" stroke="black"/><text x="{3}" y="{4:.2}" font-size="10" text-anchor="end">{5:.3}</text>"#,
                LEFT - 5.0,
                py(yv),
                LEFT,
                LEFT - 8.0,
                py(yv) + 3.0,
                yv
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 10.0,
            self.x_label
        );
        let _ = writeln!(
            s,
            r#"<text x="15" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {0})">{1}</text>"#,
            TOP + ph / 2.0,
            self.y_label
        );
        let pts: Vec<String> = self
            .overlay
            .iter()
            .filter(|(x, y)| (fx0..=fx1).contains(x) && (fy0..=fy1).contains(y))
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#, pts.join(" "));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_rect_per_cell() {
        let xs = [0.1, 0.2, 0.3];
        let ys = [1.0, 2.0];
        let cells = [1.0, -1.0, f64::NAN, 0.0, 1.0, 1.0];
        let svg = Heatmap {
            title: "t",
            x_label: "x",
            y_label: "y",
            x_values: &xs,
            y_values: &ys,
            cells: &cells,
            overlay: vec![(0.15, 1.0), (0.25, 2.0)],
        }
        .render();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 7);
        assert!(svg.contains("#bbbbbb") && svg.contains("<polyline"));
    }
}
