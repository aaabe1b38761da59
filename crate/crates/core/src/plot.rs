//! Static SVG figures: per-firm behavior panels, real versus predicted price,
//! and likelihood heatmaps.
//!
//! Output is plain text with fixed float formatting, so identical inputs give
//! identical bytes.

use std::fmt::Write;

use crate::categorical::Cpt;
use crate::error::{Error, Result};
use crate::sim::StepRecord;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const LIGHT: [&str; 6] = ["#aec7e8", "#ff9896", "#98df8a", "#c5b0d5", "#ffbb78", "#c49c94"];

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 50.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 35.0;

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    y_max: f64,
    n: usize,
}

impl Frame {
    fn slot(&self) -> f64 {
        self.w / self.n.max(1) as f64
    }

    fn x_center(&self, t: usize) -> f64 {
        self.x0 + (t as f64 + 0.5) * self.slot()
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - v.clamp(0.0, self.y_max) / self.y_max * self.h
    }

    fn axes(&self, svg: &mut String, title: &str, y_label: &str) {
        let (x0, y0, w, h) = (self.x0, self.y0, self.w, self.h);
        let _ = writeln!(svg, r##"<text x="{:.1}" y="{:.1}" font-size="13" font-weight="bold">{title}</text>"##, x0, y0 - 10.0);
        let _ = writeln!(
            svg,
            r##"<path d="M{x0:.1},{y0:.1} V{:.1} H{:.1}" fill="none" stroke="#000" stroke-width="1"/>"##,
            y0 + h,
            x0 + w
        );
        let ticks = 5;
        for k in 0..=ticks {
            let v = self.y_max * k as f64 / ticks as f64;
            let y = self.y(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="#000"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                y + 3.5,
                trim(v)
            );
        }
        for t in (0..self.n).step_by(5) {
            let x = self.x_center(t);
            let _ = writeln!(
                svg,
                r##"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{t}</text>"##,
                y0 + h + 14.0
            );
        }
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">time step</text>"##,
            x0 + w / 2.0,
            y0 + h + 28.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{y_label}</text>"##,
            x0 - 34.0,
            y0 + h / 2.0,
            x0 - 34.0,
            y0 + h / 2.0
        );
    }
}

fn trim(v: f64) -> String {
    let s = format!("{v:.1}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn open(width: f64, height: f64) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"##
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#fff"/>"##);
    svg
}

fn polyline(svg: &mut String, points: &[(f64, f64)], color: &str, class: &str) {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let _ = writeln!(
        svg,
        r##"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"##,
        pts.join(" ")
    );
}

fn check_records(records: &[StepRecord]) -> Result<usize> {
    let n = records.first().map(|r| r.firms.len()).ok_or_else(|| Error::Trace("empty trace".into()))?;
    if n == 0 || records.iter().any(|r| r.firms.len() != n) {
        return Err(Error::Trace("inconsistent firm count".into()));
    }
    Ok(n)
}

/// One panel per firm: produced units stacked on carried stock, sales as a
/// line, analysis steps marked on top and inferred reduce-context steps shaded.
pub fn behavior_svg(records: &[StepRecord]) -> Result<String> {
    let n_firms = check_records(records)?;
    let steps = records.len();
    let height = n_firms as f64 * (PANEL_H + MARGIN_T + MARGIN_B) + 30.0;
    let mut svg = open(PANEL_W, height);
    for i in 0..n_firms {
        let top = i as f64 * (PANEL_H + MARGIN_T + MARGIN_B) + MARGIN_T;
        let frame = Frame {
            x0: MARGIN_L,
            y0: top,
            w: PANEL_W - MARGIN_L - MARGIN_R,
            h: PANEL_H,
            y_max: 12.0,
            n: steps,
        };
        let _ = writeln!(svg, r##"<g class="firm" id="firm-{}">"##, i + 1);
        let slot = frame.slot();
        let bar_w = slot * 0.7;
        for (t, r) in records.iter().enumerate() {
            let f = &r.firms[i];
            let x = frame.x_center(t) - bar_w / 2.0;
            if f.inferred_context == 1 {
                let _ = writeln!(
                    svg,
                    r##"<rect class="reduce" x="{:.1}" y="{:.1}" width="{slot:.1}" height="{:.1}" fill="#eeeeee"/>"##,
                    frame.x_center(t) - slot / 2.0,
                    frame.y0,
                    frame.h
                );
            }
            let stock = f.warehouse_before as f64;
            let made = f.production as f64;
            let _ = writeln!(
                svg,
                r##"<g class="bar-group"><rect class="stock" x="{x:.1}" y="{:.1}" width="{bar_w:.1}" height="{:.1}" fill="{}"/><rect class="production" x="{x:.1}" y="{:.1}" width="{bar_w:.1}" height="{:.1}" fill="{}"/></g>"##,
                frame.y(stock),
                frame.y(0.0) - frame.y(stock),
                LIGHT[i % LIGHT.len()],
                frame.y(stock + made),
                frame.y(stock) - frame.y(stock + made),
                PALETTE[i % PALETTE.len()]
            );
            if f.analysis {
                let _ = writeln!(
                    svg,
                    r##"<circle class="analysis" cx="{:.1}" cy="{:.1}" r="3.5" fill="#000"/>"##,
                    frame.x_center(t),
                    frame.y(11.5)
                );
            }
        }
        let sales: Vec<(f64, f64)> =
            records.iter().enumerate().map(|(t, r)| (frame.x_center(t), frame.y(r.firms[i].sold as f64))).collect();
        polyline(&mut svg, &sales, "#000", "sales");
        frame.axes(&mut svg, &format!("Firm {}", i + 1), "units");
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(
        svg,
        r##"<text x="{MARGIN_L:.1}" y="{:.1}" font-size="10">dark: produced, light: stock carried in, line: sold, dot: analysis, shaded: reduce context inferred</text>"##,
        height - 10.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Realized price in black and each firm's predicted price for its chosen production.
pub fn price_svg(records: &[StepRecord]) -> Result<String> {
    let n_firms = check_records(records)?;
    let max_price = records
        .iter()
        .flat_map(|r| std::iter::once(r.price).chain(r.firms.iter().map(|f| f.predicted_price)))
        .fold(0.0, f64::max);
    let y_max = (max_price / 10.0).ceil().max(1.0) * 10.0;
    let height = PANEL_H + MARGIN_T + MARGIN_B + 20.0 + 14.0 * (n_firms + 1) as f64;
    let mut svg = open(PANEL_W, height);
    let frame = Frame { x0: MARGIN_L, y0: MARGIN_T, w: PANEL_W - MARGIN_L - MARGIN_R, h: PANEL_H, y_max, n: records.len() };
    frame.axes(&mut svg, "Real and predicted price", "price");
    let real: Vec<(f64, f64)> = records.iter().enumerate().map(|(t, r)| (frame.x_center(t), frame.y(r.price))).collect();
    polyline(&mut svg, &real, "#000", "series real");
    for i in 0..n_firms {
        let pts: Vec<(f64, f64)> =
            records.iter().enumerate().map(|(t, r)| (frame.x_center(t), frame.y(r.firms[i].predicted_price))).collect();
        polyline(&mut svg, &pts, PALETTE[i % PALETTE.len()], "series predicted");
    }
    let legend_y = MARGIN_T + PANEL_H + MARGIN_B + 10.0;
    let entries = std::iter::once(("real price".to_string(), "#000"))
        .chain((0..n_firms).map(|i| (format!("firm {} prediction", i + 1), PALETTE[i % PALETTE.len()])));
    for (k, (label, color)) in entries.enumerate() {
        let y = legend_y + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_L:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="10">{label}</text>"##,
            MARGIN_L + 20.0,
            MARGIN_L + 26.0,
            y + 3.5
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Heatmap with one row per outcome and one column per joint condition.
pub fn likelihood_svg(cpt: &Cpt, title: &str) -> Result<String> {
    cpt.validate()?;
    let rows = cpt.outcome_card();
    let cols = cpt.n_columns();
    let cell = (600.0 / cols as f64).clamp(3.0, 36.0);
    let (x0, y0) = (MARGIN_L, MARGIN_T);
    let width = x0 + cell * cols as f64 + MARGIN_R;
    let height = y0 + cell * rows as f64 + MARGIN_B;
    let mut svg = open(width, height);
    let _ = writeln!(svg, r##"<text x="{x0:.1}" y="{:.1}" font-size="13" font-weight="bold">{}</text>"##, y0 - 10.0, escape(title));
    let _ = writeln!(svg, r##"<g class="grid" data-rows="{rows}" data-cols="{cols}">"##);
    for j in 0..cols {
        let col = cpt.column_at(j);
        for (o, p) in col.iter().enumerate() {
            // highest outcome at the top
            let y = y0 + (rows - 1 - o) as f64 * cell;
            let shade = (255.0 * (1.0 - p.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                svg,
                r##"<rect class="cell" x="{:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="#{shade:02x}{shade:02x}ff"><title>{p:.4}</title></rect>"##,
                x0 + j as f64 * cell
            );
        }
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r##"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">condition</text><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">outcome</text>"##,
        x0 + cell * cols as f64 / 2.0,
        height - 12.0,
        x0 - 14.0,
        y0 + cell * rows as f64 / 2.0,
        x0 - 14.0,
        y0 + cell * rows as f64 / 2.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorical::Categorical;
    use crate::sim::FirmRecord;

    fn records(n: usize) -> Vec<StepRecord> {
        (0..n)
            .map(|t| StepRecord {
                t,
                customers: 10,
                a: 30.0,
                price: 21.0,
                firms: (0..2)
                    .map(|i| FirmRecord {
                        unit_cost: 16.0 + i as f64,
                        production: 5 - i,
                        analysis: t % 7 == 0,
                        sold: 4,
                        warehouse_before: t % 2,
                        warehouse_after: 1,
                        signal: 0,
                        inferred_warehouse: 1.0,
                        inferred_context: (t > 10) as usize,
                        p_reduce: 0.5,
                        epistemic: 0,
                        predicted_price: 20.0 + i as f64,
                        a_hat: 30.0,
                        br: 5,
                        br_recomputed: false,
                        vfe: 1.0,
                        vfe_max_rise: 0.0,
                        iterations: 3,
                        converged: true,
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn behavior_has_a_bar_group_per_step_and_firm() {
        let svg = behavior_svg(&records(25)).unwrap();
        assert_eq!(svg.matches("class=\"bar-group\"").count(), 50);
        assert_eq!(svg.matches("class=\"firm\"").count(), 2);
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn price_has_real_and_per_firm_series() {
        let svg = price_svg(&records(25)).unwrap();
        assert_eq!(svg.matches("class=\"series real\"").count(), 1);
        assert_eq!(svg.matches("class=\"series predicted\"").count(), 2);
        assert!(svg.contains("class=\"series real\" points=\"") && svg.contains("stroke=\"#000\""));
    }

    #[test]
    fn heatmap_grid_matches_table() {
        let cpt = Cpt::from_fn(3, vec![4], |c| Ok(Categorical::delta(3, c[0] % 3))).unwrap();
        let svg = likelihood_svg(&cpt, "p(o|s)").unwrap();
        assert_eq!(svg.matches("class=\"cell\"").count(), 12);
        assert!(svg.contains("data-rows=\"3\" data-cols=\"4\""));
        assert!(svg.contains("p(o|s)".replace('<', "&lt;").as_str()));
    }

    #[test]
    fn empty_trace_is_rejected() {
        assert!(behavior_svg(&[]).is_err());
        assert!(price_svg(&[]).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        assert_eq!(behavior_svg(&records(9)).unwrap(), behavior_svg(&records(9)).unwrap());
    }
}
