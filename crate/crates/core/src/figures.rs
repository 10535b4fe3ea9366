//! Scatter data of predicted against actual merger effects.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::montecarlo::McRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    /// UPP against actual Δp, one point per merging product.
    UppScatter,
    /// ρ₁ρ₂ΔHHI prediction against actual ΔCS.
    CsScatterProp1,
    /// Small-share prediction against actual ΔCS.
    CsScatterNs,
}

impl FigureKind {
    pub const ALL: [FigureKind; 3] = [
        FigureKind::UppScatter,
        FigureKind::CsScatterProp1,
        FigureKind::CsScatterNs,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            FigureKind::UppScatter => "upp_scatter",
            FigureKind::CsScatterProp1 => "cs_scatter_prop1",
            FigureKind::CsScatterNs => "cs_scatter_ns",
        }
    }

    fn title(self) -> &'static str {
        match self {
            FigureKind::UppScatter => "Price change: UPP vs actual",
            FigureKind::CsScatterProp1 => "Consumer surplus: rho1 rho2 dHHI vs actual",
            FigureKind::CsScatterNs => "Consumer surplus: small-share benchmark vs actual",
        }
    }
}

/// `(predicted, actual)` pairs from converged replicates.
pub fn scatter_points(records: &[McRecord], which: FigureKind) -> Vec<(f64, f64)> {
    let mut points = Vec::new();
    for o in records.iter().filter_map(|r| r.outcome.as_ref()) {
        match which {
            FigureKind::UppScatter => points.extend(o.upp.iter().copied().zip(o.dp.iter().copied())),
            FigureKind::CsScatterProp1 => points.push((o.dcs_prop1, o.dcs_actual)),
            FigureKind::CsScatterNs => points.push((o.dcs_ns, o.dcs_actual)),
        }
    }
    points
}

/// Writes a `predicted,actual` CSV. With no converged replicates only the
/// header is written.
pub fn emit_figure_data(records: &[McRecord], which: FigureKind, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["predicted", "actual"])?;
    for (p, a) in scatter_points(records, which) {
        w.write_record([p.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a bare SVG scatter with a 45° reference line.
pub fn emit_figure_svg(records: &[McRecord], which: FigureKind, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(&scatter_points(records, which), which.title()))?;
    Ok(())
}

fn render_svg(points: &[(f64, f64)], title: &str) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 40.0;
    let (mut lo, mut hi) = points
        .iter()
        .flat_map(|&(p, a)| [p, a])
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(lo < hi) {
        lo = if lo.is_finite() { lo - 1.0 } else { 0.0 };
        hi = lo + 2.0;
    }
    let span = hi - lo;
    let sx = |v: f64| PAD + (v - lo) / span * (SIZE - 2.0 * PAD);
    let sy = |v: f64| SIZE - PAD - (v - lo) / span * (SIZE - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>"#,
        SIZE / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{w}" height="{w}" fill="none" stroke="black"/>"#,
        w = SIZE - 2.0 * PAD
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="grey" stroke-dasharray="4 3"/>"#,
        sx(lo),
        sy(lo),
        sx(hi),
        sy(hi)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">predicted [{lo:.3e}, {hi:.3e}]</text>"#,
        SIZE / 2.0,
        SIZE - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{y}" transform="rotate(-90 12 {y})" text-anchor="middle" font-family="sans-serif" font-size="11">actual</text>"#,
        y = SIZE / 2.0
    );
    for &(p, a) in points.iter().filter(|(p, a)| p.is_finite() && a.is_finite()) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="steelblue" fill-opacity="0.5"/>"#,
            sx(p),
            sy(a)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
