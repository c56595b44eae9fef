//! Rendering: coefficient tables and SVG plots. Everything here is a pure
//! function of its inputs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{CorrelationMatrix, GapTestResult};
use crate::error::{Error, Result};
use crate::estim::RegressionFit;

/// Significance stars: *** p<0.01, ** p<0.05, * p<0.10.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

/// Machine-readable result for one focal coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub label: String,
    pub term: String,
    pub coef: f64,
    pub se: f64,
    pub p: f64,
    pub n: usize,
    pub clusters: usize,
    pub vcov_type: String,
    /// Display multiplier, e.g. 100 for per-SD effects in percentage points.
    pub scale: f64,
    pub fit: RegressionFit,
}

impl FitSummary {
    pub fn from_fit(label: impl Into<String>, fit: RegressionFit, term: &str, scale: f64) -> Result<Self> {
        let i = fit.index_of(term)?;
        Ok(FitSummary {
            label: label.into(),
            term: term.to_string(),
            coef: fit.coef[i],
            se: fit.se[i],
            p: fit.p[i],
            n: fit.n,
            clusters: fit.clusters,
            vcov_type: fit.vcov_type.clone(),
            scale,
            fit,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Load every `*.json` fit summary in `dir`, sorted by file name.
pub fn load_fits(dir: impl AsRef<Path>) -> Result<Vec<FitSummary>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".manifest.json"))
        .collect();
    paths.sort();
    let fits = paths.iter().map(FitSummary::load).collect::<Result<Vec<_>>>()?;
    if fits.is_empty() {
        return Err(Error::schema(dir.display().to_string(), "no fit summaries found"));
    }
    Ok(fits)
}

/// Measures as rows: scaled coefficient with stars, SE in parentheses beneath.
pub fn coefficient_table(fits: &[FitSummary]) -> String {
    let width = fits.iter().map(|f| f.label.len()).max().unwrap_or(0).max("Measure".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>12}  {:>10}  {:>8}", "Measure", "Coef.", "N", "Clusters");
    let _ = writeln!(out, "{}", "-".repeat(width + 38));
    for f in fits {
        let coef = format!("{:.3}{}", f.coef * f.scale, stars(f.p));
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>10}  {:>8}", f.label, coef, f.n, f.clusters);
        let _ = writeln!(out, "{:<width$}  {:>12}", "", format!("({:.3})", f.se * f.scale));
    }
    out.push_str("Note: *** p<0.01, ** p<0.05, * p<0.10.\n");
    out
}

pub fn coefficient_csv(fits: &[FitSummary]) -> String {
    let mut out = String::from("measure,term,coef,se,p,stars,n,clusters,vcov_type\n");
    for f in fits {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            f.label,
            f.term,
            f.coef * f.scale,
            f.se * f.scale,
            f.p,
            stars(f.p),
            f.n,
            f.clusters,
            f.vcov_type
        );
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue-white-red heatmap of a correlation matrix.
pub fn heatmap_svg(m: &CorrelationMatrix) -> String {
    let n = m.labels.len();
    let cell = 36.0;
    let margin = 140.0;
    let size = margin + cell * n as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="11">"#);
    for (i, row) in m.rho.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            let r = if r.is_finite() { r.clamp(-1.0, 1.0) } else { 0.0 };
            let (red, green, blue) = if r >= 0.0 {
                (255.0, 255.0 * (1.0 - r), 255.0 * (1.0 - r))
            } else {
                (255.0 * (1.0 + r), 255.0 * (1.0 + r), 255.0)
            };
            let (x, y) = (margin + cell * j as f64, margin + cell * i as f64);
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({},{},{})"/><text x="{}" y="{}" text-anchor="middle">{:.2}</text>"#,
                red.round(),
                green.round(),
                blue.round(),
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                r
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            margin - 6.0,
            margin + cell * i as f64 + cell / 2.0 + 4.0,
            escape(&m.labels[i])
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate({},{}) rotate(-60)">{}</text>"#,
            margin + cell * i as f64 + cell / 2.0,
            margin - 6.0,
            escape(&m.labels[i])
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Point estimates with interval whiskers, one row per entry.
pub fn forest_svg(rows: &[(String, f64, f64, f64)]) -> String {
    let row_h = 24.0;
    let (left, plot_w) = (180.0, 360.0);
    let height = 40.0 + row_h * rows.len() as f64;
    let lo = rows.iter().map(|r| r.2).fold(0.0f64, f64::min);
    let hi = rows.iter().map(|r| r.3).fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let sx = |v: f64| left + (v - lo) / span * plot_w;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="11">"#,
        left + plot_w + 20.0
    );
    let _ = writeln!(s, r##"<line x1="{0}" y1="10" x2="{0}" y2="{1}" stroke="#888" stroke-dasharray="3,3"/>"##, sx(0.0), height - 20.0);
    for (i, (label, est, l, h)) in rows.iter().enumerate() {
        let y = 24.0 + row_h * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 8.0, y + 4.0, escape(label));
        let _ = writeln!(s, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#, sx(*l), sx(*h));
        let _ = writeln!(s, r#"<circle cx="{}" cy="{y}" r="3.5" fill="black"/>"#, sx(*est));
    }
    s.push_str("</svg>\n");
    s
}

pub fn gap_forest_svg(g: &GapTestResult) -> String {
    let rows: Vec<_> = g.rows.iter().map(|r| (r.outcome.clone(), r.delta, r.ci_low, r.ci_high)).collect();
    forest_svg(&rows)
}

/// Forest plot of fit summaries with t-based 95% intervals on the display scale.
pub fn fits_forest_svg(fits: &[FitSummary]) -> Result<String> {
    let rows = fits
        .iter()
        .map(|f| {
            let i = f.fit.index_of(&f.term)?;
            let (l, h) = f.fit.ci(i, 0.95)?;
            Ok((f.label.clone(), f.coef * f.scale, l * f.scale, h * f.scale))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(forest_svg(&rows))
}
