//! Self-contained SVG line plots with optional log scale and an
//! exponential reference line. Output depends only on the inputs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::table::Table;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points,
        }
    }
}

/// `v0 e^{−rate (t − t0)}` anchored at the first point of the first series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub reference: Option<Reference>,
}

impl PlotSpec {
    pub fn decay(title: impl Into<String>, rate: Option<f64>) -> Self {
        PlotSpec {
            title: title.into(),
            x_label: "t".into(),
            y_label: "norm".into(),
            log_y: true,
            reference: rate.map(|rate| Reference { rate }),
        }
    }

    pub fn linear(title: impl Into<String>, y_label: impl Into<String>) -> Self {
        PlotSpec {
            title: title.into(),
            x_label: "t".into(),
            y_label: y_label.into(),
            log_y: false,
            reference: None,
        }
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-2..1e4).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Renders the plot. Fails when there is no series or when a series has no
/// plottable point.
pub fn render_svg(spec: &PlotSpec, series: &[Series]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::MissingSeries("no series to plot".into()));
    }
    let ty = |v: f64| if spec.log_y { v.log10() } else { v };
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::with_capacity(series.len());
    for s in series {
        let p: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!spec.log_y || *y > 0.0))
            .map(|&(x, y)| (x, ty(y)))
            .collect();
        if p.is_empty() {
            return Err(Error::MissingSeries(format!("series `{}` has no plottable points", s.name)));
        }
        pts.push(p);
    }
    let reference: Option<Vec<(f64, f64)>> = spec.reference.map(|r| {
        let (t0, v0) = pts[0][0];
        let t1 = pts[0].last().expect("non-empty").0;
        (0..=32)
            .map(|k| {
                let t = t0 + (t1 - t0) * k as f64 / 32.0;
                let v = if spec.log_y {
                    v0 - r.rate * (t - t0) / std::f64::consts::LN_10
                } else {
                    v0 * (-r.rate * (t - t0)).exp()
                };
                (t, v)
            })
            .collect()
    });
    let all = pts.iter().flatten().copied();
    let (x0, mut x1, mut y0, mut y1) = all.fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |b, (x, y)| (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y)),
    );
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 0.5;
        y0 -= 0.5;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y.clamp(y0, y1)) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        esc(&spec.title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let ylab = if spec.log_y { format!("1e{}", nice(yv)) } else { nice(yv) };
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            H - BOTTOM + 18.0,
            nice(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            ylab
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 10.0,
        esc(&spec.x_label)
    );
    let y_label = if spec.log_y {
        format!("{} (log10)", spec.y_label)
    } else {
        spec.y_label.clone()
    };
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&y_label)
    );
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = TOP + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" text-anchor="end" fill="{color}">{}</text>"#,
            W - RIGHT - 8.0,
            esc(&s.name)
        );
    }
    if let (Some(rp), Some(r)) = (reference, spec.reference) {
        // the reference is clipped to the data range rather than widening it
        let tol = 1e-9 * (y1 - y0);
        let path: Vec<String> = rp
            .iter()
            .filter(|(_, y)| *y >= y0 - tol && *y <= y1 + tol)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline class="reference" fill="none" stroke="#555" stroke-dasharray="6 4" points="{}"/>"##,
            path.join(" ")
        );
        let ly = TOP + 16.0 + 16.0 * series.len() as f64;
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{ly:.2}" text-anchor="end" fill="#555">reference rate {}</text>"##,
            W - RIGHT - 8.0,
            nice(r.rate)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Plots columns of a CSV table against `x`; nothing is written on error.
pub fn emit_plot(table: &Table, x: &str, columns: &[&str], spec: &PlotSpec, path: &Path) -> Result<()> {
    let series = columns
        .iter()
        .map(|c| Ok(Series::new(*c, table.series(x, c)?)))
        .collect::<Result<Vec<_>>>()?;
    let svg = render_svg(spec, &series)?;
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expo() -> Series {
        Series::new("u", (0..20).map(|i| (i as f64 * 0.1, (-2.0 * i as f64 * 0.1).exp())).collect())
    }

    #[test]
    fn deterministic_output() {
        let spec = PlotSpec::decay("decay", Some(2.0));
        let a = render_svg(&spec, &[expo()]).unwrap();
        let b = render_svg(&spec, &[expo()]).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn pure_exponential_coincides_with_reference() {
        // on a log axis the data line and the reference share endpoints
        let svg = render_svg(&PlotSpec::decay("d", Some(2.0)), &[expo()]).unwrap();
        let poly = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        let reference = svg.lines().find(|l| l.contains("class=\"reference\"")).unwrap();
        let points = |l: &str| -> Vec<String> {
            let body = l.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
            body.split(' ').map(str::to_string).collect()
        };
        let (p, r) = (points(poly), points(reference));
        assert_eq!(p.first(), r.first());
        assert_eq!(p.last(), r.last());
    }

    #[test]
    fn empty_series_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let mut t = Table::new(["t", "e"]);
        let spec = PlotSpec::linear("energy", "E");
        assert!(emit_plot(&t, "t", &["e"], &spec, &path).is_err());
        assert!(!path.exists());
        t.push(vec![0.0, 1.0]).unwrap();
        let err = emit_plot(&t, "t", &["missing"], &spec, &path).unwrap_err();
        assert!(err.to_string().contains("missing"));
        assert!(!path.exists());
        emit_plot(&t, "t", &["e"], &spec, &path).unwrap();
        assert!(path.exists());
    }
}
