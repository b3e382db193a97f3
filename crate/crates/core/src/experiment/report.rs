//! CSV tables and rate-AP curve plots from a [`SweepResult`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::cache::write_atomic;
use super::{theta_dir, CellResult, OperatingPoint, SweepResult};
use crate::error::{Error, Result};
use crate::qpmap::QpDelta;

fn bdr_field(cell: Option<&CellResult>) -> String {
    match cell {
        Some(c) => match (c.status.is_complete(), c.bdr) {
            (true, Some(v)) => format!("{v:.4}"),
            _ => c.status.marker().to_string(),
        },
        None => "pending".to_string(),
    }
}

/// Index of the smallest complete BD-rate in `row`; first one wins ties.
fn best<'a>(row: impl Iterator<Item = Option<&'a CellResult>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, cell) in row.enumerate() {
        if let Some(v) = cell.filter(|c| c.status.is_complete()).and_then(|c| c.bdr) {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Writes `tables/bdr_<detector>.csv` (QP delta rows, θ columns) for every
/// detector, `tables/detectors_theta_<θ>.csv` (detector rows, QP delta
/// columns) for every θ, and `tables/cells.csv` with one line per cell. The
/// `best` column names the column with the largest saving in each row.
pub fn report_tables(result: &SweepResult, out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join("tables");
    let mut written = Vec::new();

    for det in &result.detectors {
        let mut csv = String::from("qp_delta");
        for t in &result.thetas {
            write!(csv, ",theta={t}").unwrap();
        }
        csv.push_str(",best\n");
        for &delta in &result.qp_deltas {
            let row: Vec<_> = result.thetas.iter().map(|&t| result.cell(det, t, delta)).collect();
            write!(csv, "{delta}").unwrap();
            for c in &row {
                write!(csv, ",{}", bdr_field(*c)).unwrap();
            }
            match best(row.into_iter()) {
                Some(i) => writeln!(csv, ",theta={}", result.thetas[i]).unwrap(),
                None => csv.push_str(",\n"),
            }
        }
        let path = dir.join(format!("bdr_{det}.csv"));
        write_atomic(&path, csv.as_bytes())?;
        written.push(path);
    }

    for &theta in &result.thetas {
        let mut csv = String::from("detector");
        for d in &result.qp_deltas {
            write!(csv, ",qp_delta={d}").unwrap();
        }
        csv.push_str(",best\n");
        for det in &result.detectors {
            let row: Vec<_> = result.qp_deltas.iter().map(|&d| result.cell(det, theta, d)).collect();
            csv.push_str(det);
            for c in &row {
                write!(csv, ",{}", bdr_field(*c)).unwrap();
            }
            match best(row.into_iter()) {
                Some(i) => writeln!(csv, ",qp_delta={}", result.qp_deltas[i]).unwrap(),
                None => csv.push_str(",\n"),
            }
        }
        let path = dir.join(format!("detectors_theta_{}.csv", theta_dir(theta)));
        write_atomic(&path, csv.as_bytes())?;
        written.push(path);
    }

    let mut csv = String::from("detector,theta,qp_delta,status,bdr\n");
    for c in &result.cells {
        let bdr = c.bdr.map(|v| v.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{},{},{bdr}", c.detector, c.theta, c.qp_delta, c.status.marker()).unwrap();
    }
    let path = dir.join("cells.csv");
    write_atomic(&path, csv.as_bytes())?;
    written.push(path);
    Ok(written)
}

/// Which cell each detector contributes to the curve plot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CurveSelection {
    /// Defaults to the first θ of the sweep.
    pub theta: Option<f64>,
    /// Defaults to `max` if swept, else the last delta.
    pub qp_delta: Option<QpDelta>,
    /// Overrides the result's uncompressed reference value.
    pub uncompressed_quality: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `curves/<detector>.csv` for the selected (θ, delta) cell of every
/// detector, next to the anchor, plus `curves/rate_ap.svg` with one polyline
/// per complete curve. Values are printed in shortest round-trip form.
pub fn report_curves(result: &SweepResult, out: &Path, sel: &CurveSelection) -> Result<Vec<PathBuf>> {
    let theta = sel.theta.unwrap_or(result.thetas[0]);
    let delta = sel.qp_delta.unwrap_or_else(|| {
        if result.qp_deltas.contains(&QpDelta::Max) {
            QpDelta::Max
        } else {
            *result.qp_deltas.last().expect("nonempty delta grid")
        }
    });
    let dir = out.join("curves");
    let mut written = Vec::new();
    let mut series: Vec<(String, &[OperatingPoint])> = Vec::new();

    for det in &result.detectors {
        let cell = result
            .cell(det, theta, delta)
            .ok_or_else(|| Error::Config(format!("no cell for {det} theta={theta} delta={delta}")))?;
        let mut csv = String::from("qp_base,rate,weighted_ap,anchor_rate,anchor_weighted_ap\n");
        for (p, a) in cell.points.iter().zip(&result.anchor.points) {
            writeln!(
                csv,
                "{},{},{},{},{}",
                p.qp_base,
                p.rate,
                fmt_opt(p.quality),
                a.rate,
                fmt_opt(a.quality)
            )
            .unwrap();
        }
        let path = dir.join(format!("{det}.csv"));
        write_atomic(&path, csv.as_bytes())?;
        written.push(path);
        if cell.points.iter().all(|p| p.quality.is_some()) {
            series.push((det.clone(), &cell.points));
        }
    }
    if result.anchor.points.iter().all(|p| p.quality.is_some()) {
        series.push(("anchor (constant QP)".to_string(), &result.anchor.points));
    }

    let title = format!("theta={theta} qp_delta={delta}");
    let svg = render_svg(&title, &series, sel.uncompressed_quality.or(result.uncompressed_quality));
    let path = dir.join("rate_ap.svg");
    write_atomic(&path, svg.as_bytes())?;
    written.push(path);
    Ok(written)
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn render_svg(title: &str, series: &[(String, &[OperatingPoint])], reference: Option<f64>) -> String {
    let (w, h) = (720.0, 480.0);
    let (left, right, top, bottom) = (70.0, 200.0, 40.0, 60.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        xr = (xr.0.min(p.rate), xr.1.max(p.rate));
        let q = p.quality.unwrap_or(0.0);
        yr = (yr.0.min(q), yr.1.max(q));
    }
    if let Some(r) = reference {
        yr = (yr.0.min(r), yr.1.max(r));
    }
    if !xr.0.is_finite() {
        xr = (0.0, 1.0);
    }
    if !yr.0.is_finite() {
        yr = (0.0, 1.0);
    }
    if xr.1 <= xr.0 {
        xr.1 = xr.0 + 1.0;
    }
    if yr.1 <= yr.0 {
        yr.1 = yr.0 + 1.0;
    }
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let sx = |x: f64| left + (x - xr.0) / (xr.1 - xr.0) * plot_w;
    let sy = |y: f64| top + plot_h - (y - yr.0) / (yr.1 - yr.0) * plot_h;

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, left, xml_escape(title)).unwrap();
    writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + plot_h,
        left + plot_w
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">Bitrate [bits/image]</text>"#,
        left + plot_w / 2.0,
        h - 15.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 18 {})">Weighted AP</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    )
    .unwrap();
    for (v, anchor) in [(xr.0, "start"), (xr.1, "end")] {
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{:.0}</text>"#,
            sx(v),
            top + plot_h + 16.0,
            v
        )
        .unwrap();
    }
    for v in [yr.0, yr.1] {
        writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            sy(v) + 4.0,
            v
        )
        .unwrap();
    }

    if let Some(r) = reference {
        writeln!(
            s,
            r#"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="black" stroke-dasharray="2,3"/>"#,
            left + plot_w,
            y = sy(r)
        )
        .unwrap();
    }
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut sorted: Vec<&OperatingPoint> = points.iter().collect();
        sorted.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        let coords: Vec<String> = sorted
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.rate), sy(p.quality.unwrap_or(0.0))))
            .collect();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        )
        .unwrap();
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + plot_w + 15.0;
        writeln!(s, r#"<rect x="{lx}" y="{}" width="12" height="3" fill="{color}"/>"#, ly - 4.0).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 18.0,
            xml_escape(name)
        )
        .unwrap();
    }
    if reference.is_some() {
        let ly = top + 10.0 + 18.0 * series.len() as f64;
        let lx = left + plot_w + 15.0;
        writeln!(s, r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-dasharray="2,3"/>"#, ly - 3.0, lx + 12.0, ly - 3.0).unwrap();
        writeln!(s, r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11">uncompressed</text>"#, lx + 18.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
