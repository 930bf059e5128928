//! Per-load bar charts.
//!
//! One chart per load. Three stacked panels (heel, modules, metatarsus),
//! each with four groups of six bars: the groups are the obstacle heights
//! and the bars the positions p1..p6. Bars show |e_b| in percent when
//! experimental data was supplied, otherwise the simulated force in N.
//! Elements are emitted in a fixed order: background, title, then per panel
//! the frame, y ticks, bars (height-major, position-minor), group labels,
//! and finally the legend.

use std::fmt::Write;

use crate::bench::{ErrorReport, TrialKey, TrialResult, COMPONENTS, HEIGHTS_M, LOADS_N};
use crate::model::FASCIA_MODULES;

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 180.0;
const TOP: f64 = 50.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const GAP: f64 = 40.0;
const LEGEND_H: f64 = 40.0;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"];

/// Bar value for component `c` of the trial `key`, if defined.
fn value(report: &ErrorReport, results: &[TrialResult], key: TrialKey, c: usize) -> Option<f64> {
    if report.experimental_supplied {
        let t = report.trials.iter().find(|t| t.key == key)?;
        [t.e_h, t.e_p, t.e_m][c].map(|e| 100.0 * e.abs())
    } else {
        let r = results.iter().find(|r| r.ok() && r.config.key() == key)?;
        Some(r.forces[c]).filter(|f| f.is_finite())
    }
}

fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 || !v.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if v <= m * mag {
            return m * mag;
        }
    }
    10.0 * mag
}

/// The chart for one load.
pub fn load_chart(load: f64, results: &[TrialResult], report: &ErrorReport) -> String {
    let unit = if report.experimental_supplied { "|e_b| (%)" } else { "force (N)" };
    let height = TOP + 3.0 * PANEL_H + 2.0 * GAP + LEGEND_H + 30.0;
    let plot_w = WIDTH - LEFT - RIGHT;
    let group_w = plot_w / HEIGHTS_M.len() as f64;
    let bar_w = group_w * 0.8 / FASCIA_MODULES as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">Load {load} N: {unit}</text>"#,
        WIDTH / 2.0
    );

    for (c, name) in COMPONENTS.iter().enumerate() {
        let y0 = TOP + c as f64 * (PANEL_H + GAP);
        let values: Vec<Vec<Option<f64>>> = HEIGHTS_M
            .iter()
            .map(|&h| {
                (1..=FASCIA_MODULES)
                    .map(|p| value(report, results, TrialKey::new(load, h, p), c))
                    .collect()
            })
            .collect();
        let vmax = values.iter().flatten().flatten().fold(0.0, |a: f64, b| a.max(*b));
        let top = nice_ceiling(vmax);
        let scale = PANEL_H / top;

        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{y0:.1}" width="{plot_w:.1}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12">{name}</text>"#, LEFT, y0 - 6.0);
        for i in 0..=4 {
            let v = top * i as f64 / 4.0;
            let y = y0 + PANEL_H - v * scale;
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                LEFT - 4.0,
                LEFT - 6.0,
                y + 4.0,
                format_tick(v)
            );
        }
        for (g, group) in values.iter().enumerate() {
            let gx = LEFT + g as f64 * group_w + 0.1 * group_w;
            for (p, v) in group.iter().enumerate() {
                let Some(v) = v else { continue };
                let h = v * scale;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{bar_w:.1}" height="{h:.1}" fill="{}"><title>p{} {:.3}</title></rect>"#,
                    gx + p as f64 * bar_w,
                    y0 + PANEL_H - h,
                    PALETTE[p],
                    p + 1,
                    v
                );
            }
        }
        for (g, h) in HEIGHTS_M.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{} mm</text>"#,
                LEFT + (g as f64 + 0.5) * group_w,
                y0 + PANEL_H + 14.0,
                (h * 1e3).round()
            );
        }
    }

    let ly = TOP + 3.0 * PANEL_H + 2.0 * GAP + 10.0;
    for p in 0..FASCIA_MODULES {
        let x = LEFT + p as f64 * 70.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{ly:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">p{}</text>"#,
            PALETTE[p],
            x + 16.0,
            ly + 10.0,
            p + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    format!("{r}")
}

pub fn chart_file_name(load: f64) -> String {
    format!("chart_{}N.svg", load.round() as i64)
}

/// All bench charts as `(file name, contents)`, in load order.
pub fn bench_charts(results: &[TrialResult], report: &ErrorReport) -> Vec<(String, String)> {
    LOADS_N
        .iter()
        .map(|&l| (chart_file_name(l), load_chart(l, results, report)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks() {
        assert_eq!(nice_ceiling(0.0), 1.0);
        assert_eq!(nice_ceiling(7.3), 10.0);
        assert_eq!(nice_ceiling(21.0), 25.0);
        assert_eq!(nice_ceiling(0.16), 0.2);
        assert_eq!(format_tick(2.5), "2.5");
        assert_eq!(chart_file_name(12.0), "chart_12N.svg");
    }
}
