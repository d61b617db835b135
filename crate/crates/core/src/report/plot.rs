//! SVG line charts of NRMSE against a sweep axis.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{ExperimentResult, Provenance, SweepAxis, Technique};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub technique: Technique,
    /// One value per x tick; NaN where the technique has no result.
    pub nrmse_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure {
    pub axis: SweepAxis,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub x_values: Vec<usize>,
    pub series: Vec<Series>,
}

impl Figure {
    pub fn from_results(results: &[ExperimentResult], axis: SweepAxis) -> Result<Figure> {
        let rows: Vec<_> = results
            .iter()
            .flat_map(|r| &r.rows)
            .filter(|row| row.sweep_axis == Some(axis))
            .collect();
        if rows.is_empty() {
            return Err(Error::MissingSweepData(format!(
                "no results for the {axis} sweep"
            )));
        }
        let mut x_values: Vec<usize> = rows.iter().filter_map(|r| r.sweep_value).collect();
        x_values.sort_unstable();
        x_values.dedup();
        let mut techniques: Vec<Technique> = rows.iter().map(|r| r.technique).collect();
        techniques.sort_unstable();
        techniques.dedup();
        let series = techniques
            .into_iter()
            .map(|technique| Series {
                technique,
                nrmse_m: x_values
                    .iter()
                    .map(|&x| {
                        rows.iter()
                            .find(|r| r.technique == technique && r.sweep_value == Some(x))
                            .map_or(f64::NAN, |r| r.nrmse_m)
                    })
                    .collect(),
            })
            .collect();
        Ok(Figure {
            axis,
            x_label: format!("number of {axis}"),
            y_label: "NRMSE (m)".into(),
            log_y: true,
            x_values,
            series,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub results: Vec<ExperimentResult>,
    pub figures: Vec<Figure>,
    pub provenance: Provenance,
}

impl ReportBundle {
    /// Bundles results with a figure for every sweep axis they cover.
    pub fn new(results: Vec<ExperimentResult>) -> Result<Self> {
        let provenance = results
            .first()
            .map(|r| r.provenance.clone())
            .ok_or_else(|| Error::InvalidInput("no results".into()))?;
        let figures = [SweepAxis::Rescuers, SweepAxis::Victims]
            .into_iter()
            .filter_map(|axis| Figure::from_results(&results, axis).ok())
            .collect();
        Ok(Self {
            results,
            figures,
            provenance,
        })
    }
}

fn color(t: Technique) -> &'static str {
    match t {
        Technique::ToaCoop => "#1f77b4",
        Technique::TdoaNoncoop => "#ff7f0e",
        Technique::AoaCoop => "#2ca02c",
        Technique::RssdNoncoop => "#d62728",
        Technique::RssCoopGd => "#9467bd",
        Technique::RssCoopMm => "#8c564b",
        Technique::ToaNoncoop => "#7f7f7f",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Decade range covering every finite positive value.
fn decades(fig: &Figure) -> (i32, i32) {
    let values = fig
        .series
        .iter()
        .flat_map(|s| &s.nrmse_m)
        .copied()
        .filter(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (-1, 1);
    }
    let lo = lo.log10().floor() as i32;
    let hi = (hi.log10().ceil() as i32).max(lo + 1);
    (lo, hi)
}

pub fn render_svg(fig: &Figure, provenance: &Provenance) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let (d_lo, d_hi) = decades(fig);
    let x_min = *fig.x_values.first().unwrap_or(&0) as f64;
    let x_max = *fig.x_values.last().unwrap_or(&1) as f64;
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let px = |x: f64| LEFT + (x - x_min) / x_span * plot_w;
    let py = |y: f64| TOP + (d_hi as f64 - y.log10()) / (d_hi - d_lo) as f64 * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<title>NRMSE versus number of {}</title>", fig.axis);
    s.push_str("<desc>\n");
    for (key, value) in provenance.fields() {
        let _ = writeln!(s, "{key}: {}", escape(&value));
    }
    s.push_str("</desc>\n");
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#000"/>"##
    );

    for d in d_lo..=d_hi {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ccc"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for &x in &fig.x_values {
        let xp = px(x as f64);
        let _ = writeln!(
            s,
            r##"<line class="xtick" x1="{xp:.2}" y1="{:.2}" x2="{xp:.2}" y2="{:.2}" stroke="#000"/>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{xp:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(&fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{} (log scale)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&fig.y_label)
    );

    for (k, series) in fig.series.iter().enumerate() {
        let c = color(series.technique);
        let points: Vec<(f64, f64)> = fig
            .x_values
            .iter()
            .zip(&series.nrmse_m)
            .filter(|(_, v)| v.is_finite() && **v > 0.0)
            .map(|(&x, &v)| (px(x as f64), py(v)))
            .collect();
        let path: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        let _ = writeln!(
            s,
            r#"<g class="series" data-technique="{}"><polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            series.technique,
            path.join(" ")
        );
        for (x, y) in &points {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{c}"/>"#);
        }
        s.push_str("</g>\n");
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{c}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{} ({})</text>"#,
            lx + 26.0,
            ly + 4.0,
            series.technique,
            series.technique.alias()
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_plot(results: &[ExperimentResult], axis: SweepAxis, path: &Path) -> Result<()> {
    let fig = Figure::from_results(results, axis)?;
    let provenance = &results[0].provenance;
    std::fs::write(path, render_svg(&fig, provenance))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ExperimentConfig, ResultRow};

    fn sweep(axis: SweepAxis, techniques: &[Technique]) -> Vec<ExperimentResult> {
        axis.default_values()
            .into_iter()
            .map(|v| ExperimentResult {
                provenance: Provenance::new(&ExperimentConfig::default()),
                rows: techniques
                    .iter()
                    .map(|&technique| ResultRow {
                        technique,
                        sweep_axis: Some(axis),
                        sweep_value: Some(v),
                        nrmse_m: 0.1 * v as f64,
                        runtime_mean_s: 0.0,
                        runtime_total_s: 0.0,
                        convergence_rate: 1.0,
                        trials: 1,
                        excluded_trials: 0,
                        seed: 1,
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn rescuers_figure() {
        let results = sweep(SweepAxis::Rescuers, &Technique::DEFAULTS);
        let fig = Figure::from_results(&results, SweepAxis::Rescuers).unwrap();
        assert_eq!(fig.x_values, vec![6, 8, 10, 12, 14]);
        assert_eq!(fig.series.len(), 6);
        assert!(fig.series.iter().all(|s| s.nrmse_m.len() == 5));
        let svg = render_svg(&fig, &results[0].provenance);
        assert_eq!(svg.matches(r#"class="xtick""#).count(), 5);
        assert_eq!(svg.matches(r#"class="series""#).count(), 6);
        assert!(svg.contains("<desc>") && svg.contains("config_hash"));
        assert_eq!(svg, render_svg(&fig, &results[0].provenance));
    }

    #[test]
    fn missing_axis() {
        let results = sweep(SweepAxis::Rescuers, &Technique::DEFAULTS);
        assert!(matches!(
            Figure::from_results(&results, SweepAxis::Victims),
            Err(Error::MissingSweepData(_))
        ));
    }
}
