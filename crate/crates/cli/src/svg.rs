//! Minimal standalone SVG line plots with a provenance `<metadata>` block.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

pub struct Series<'a> {
    pub name: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub style: Style,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
}

/// Key/value pairs written into the SVG metadata.
pub type Provenance<'a> = &'a [(&'a str, String)];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const COLOURS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi > lo {
        Some((lo, hi))
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        Some((lo - pad, hi + pad))
    }
}

pub fn render(plot: &Plot, provenance: Provenance) -> Result<String, String> {
    let (xr, yr) = match (
        range(plot.series.iter().flat_map(|s| s.x.iter().copied())),
        range(plot.series.iter().flat_map(|s| s.y.iter().copied())),
    ) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err("nothing finite to plot".into()),
    };
    let (ml, mr, mt, mb) = MARGIN;
    let pw = WIDTH - ml - mr;
    let ph = HEIGHT - mt - mb;
    let sx = |x: f64| ml + (x - xr.0) / (xr.1 - xr.0) * pw;
    let sy = |y: f64| mt + (1.0 - (y - yr.0) / (yr.1 - yr.0)) * ph;

    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, "<metadata>");
    for (k, v) in provenance {
        let _ = writeln!(w, r#"  <entry key="{}">{}</entry>"#, escape(k), escape(v));
    }
    let _ = writeln!(w, "</metadata>");
    let _ = writeln!(w, r#"<title>{}</title>"#, escape(plot.title));
    let _ = writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = xr.0 + t * (xr.1 - xr.0);
        let yv = yr.0 + t * (yr.1 - yr.0);
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.4e}</text>"#,
            sx(xv),
            HEIGHT - mb + 16.0,
            xv
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3e}</text>"#,
            ml - 4.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        HEIGHT - 10.0,
        escape(plot.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        escape(plot.y_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        ml + pw / 2.0,
        mt - 14.0,
        escape(plot.title)
    );
    for (i, s) in plot.series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts = s.x.iter().zip(s.y).filter(|(x, y)| x.is_finite() && y.is_finite());
        match s.style {
            Style::Line => {
                let mut d = String::new();
                for (k, (&x, &y)) in pts.enumerate() {
                    let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, sx(x), sy(y));
                }
                let _ = writeln!(
                    w,
                    r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                    d.trim_end()
                );
            }
            Style::Points => {
                let _ = writeln!(w, r#"<g fill="{colour}" fill-opacity="0.6">"#);
                for (&x, &y) in pts {
                    let _ = writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="1.6"/>"#, sx(x), sy(y));
                }
                let _ = writeln!(w, "</g>");
            }
        }
        let ly = mt + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{colour}" text-anchor="end">{}</text>"#,
            WIDTH - mr - 8.0,
            escape(s.name)
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_with_metadata() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, f64::NAN, 3.0];
        let plot = Plot {
            title: "a < b",
            x_label: "B (T)",
            y_label: "1/Q",
            series: vec![Series { name: "data", x: &x, y: &y, style: Style::Points }],
        };
        let svg = render(&plot, &[("config_hash", "abc".into())]).unwrap();
        assert!(svg.contains(r#"<entry key="config_hash">abc</entry>"#));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn empty_plot_is_an_error() {
        let plot = Plot { title: "", x_label: "", y_label: "", series: vec![] };
        assert!(render(&plot, &[]).is_err());
    }
}
