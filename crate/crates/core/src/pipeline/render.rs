//! CSV tables and a scatter plot from a saved report.

use std::fmt::Write as _;
use std::path::Path;

use super::Scatter;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::metrics::FairnessReport;

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// `label,maa_global`.
pub fn summary_csv(report: &FairnessReport) -> String {
    let mut out = String::from("label,maa_global\n");
    for l in &report.labels {
        let _ = writeln!(out, "{},{}", l.label, fmt_f64(l.maa_global));
    }
    out
}

/// Per-category accuracy and indicator correlation.
pub fn groups_csv(report: &FairnessReport) -> String {
    let mut out = String::from("label,attr,category,maa,pcc,pcc_p_value\n");
    for l in &report.labels {
        for a in &l.attrs {
            for (category, maa) in &a.maa_per_group {
                let pcc = a.pcc_per_category.get(category).copied().flatten();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    l.label,
                    a.attr,
                    category,
                    fmt_f64(*maa),
                    opt(pcc.map(|p| p.r)),
                    opt(pcc.map(|p| p.p_value))
                );
            }
        }
    }
    out
}

/// Every ordered pair of equal-accuracy differences.
pub fn equal_accuracy_csv(report: &FairnessReport) -> String {
    let mut out = String::from("label,attr,a,b,ea\n");
    for l in &report.labels {
        for a in &l.attrs {
            for pair in &a.ea_pairs {
                let _ = writeln!(out, "{},{},{},{},{}", l.label, a.attr, pair.a, pair.b, fmt_f64(pair.value));
            }
        }
    }
    out
}

/// One row per label and attribute with the aggregate fairness measures.
pub fn fairness_csv(report: &FairnessReport) -> String {
    let mut out = String::from("label,attr,sp,ea_aggregate,max_abs_pcc,max_abs_pcc_p_value\n");
    for l in &report.labels {
        for a in &l.attrs {
            let pcc = a.max_abs_pcc();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                l.label,
                a.attr,
                opt(a.sp),
                opt(a.ea_aggregate),
                opt(pcc.map(|p| p.r)),
                opt(pcc.map(|p| p.p_value))
            );
        }
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-3);
    (lo - pad, hi + pad)
}

/// MAA against indicator correlation per tuning candidate, with the
/// constant-predictor baseline as a dashed line. Competent candidates are
/// drawn filled.
pub fn scatter_svg(scatter: &Scatter) -> String {
    let points: Vec<_> = scatter
        .points
        .iter()
        .filter(|p| p.maa.is_finite() && p.pcc.is_finite())
        .collect();
    let (x0, x1) = padded_range(points.iter().map(|p| p.pcc).chain([0.0]));
    let (y0, y1) = padded_range(points.iter().map(|p| p.maa).chain([scatter.baseline_maa]));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {top}V{bottom}H{right}" fill="none" stroke="black"/>"#
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#,
            bottom + 5.0,
            bottom + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0
        );
    }
    let by = sy(scatter.baseline_maa);
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{by:.2}" x2="{right}" y2="{by:.2}" stroke="gray" stroke-dasharray="6 4"/>"#
    );
    for p in &points {
        let fill = if p.competent { "seagreen" } else { "none" };
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{fill}" stroke="seagreen"><title>{} #{}: maa {} pcc {} p {}</title></circle>"#,
            sx(p.pcc),
            sy(p.maa),
            p.model,
            p.index,
            fmt_f64(p.maa),
            fmt_f64(p.pcc),
            fmt_f64(p.p_value)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">PCC ({})</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        scatter.attr
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">MAA</text>"#,
        HEIGHT / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes the tables, and the scatter plot when scatter data is given.
pub fn write_all(report: &FairnessReport, scatter: Option<&Scatter>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        ("summary.csv", summary_csv(report)),
        ("groups.csv", groups_csv(report)),
        ("equal_accuracy.csv", equal_accuracy_csv(report)),
        ("fairness.csv", fairness_csv(report)),
    ];
    if let Some(s) = scatter {
        files.push(("scatter.svg", scatter_svg(s)));
    }
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
