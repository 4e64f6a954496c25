//! Five-panel threshold-sweep figure: balanced accuracy on the left axis and
//! one fairness metric on the right axis of each panel.

use std::fmt::Write;

use crate::metrics::{FairnessMetric, Measured};
use crate::pipeline::{SweepRecord, SweepResult};

const PANEL_WIDTH: f64 = 260.0;
const PANEL_HEIGHT: f64 = 230.0;
const MARGIN_LEFT: f64 = 46.0;
const MARGIN_RIGHT: f64 = 50.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 40.0;
const HEADER: f64 = 56.0;

pub const X_MIN: f64 = 0.01;
pub const X_MAX: f64 = 0.99;

const ACCURACY_COLOUR: &str = "#1f77b4";
const FAIRNESS_COLOUR: &str = "#d62728";
const MARKER_COLOUR: &str = "#555555";

fn escape(text: &str) -> String {
    text.chars()
        .map(|c| match c {
            '&' => "&amp;".to_string(),
            '<' => "&lt;".to_string(),
            '>' => "&gt;".to_string(),
            '"' => "&quot;".to_string(),
            c => c.to_string(),
        })
        .collect()
}

/// Linear map of `[lo, hi]` onto `[out_lo, out_hi]`.
#[derive(Debug, Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    out_lo: f64,
    out_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        self.out_lo + (v - self.lo) / (self.hi - self.lo) * (self.out_hi - self.out_lo)
    }
}

/// Padded range of the defined values; a constant series sits mid-panel.
fn value_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    if span <= 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * lo.abs().max(0.1);
        return (lo - pad, hi + pad);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

/// `M`/`L` path over the defined points; each undefined value starts a new
/// subpath.
fn series_path(records: &[SweepRecord], value: impl Fn(&SweepRecord) -> &Measured, x: Scale, y: Scale) -> String {
    let mut d = String::new();
    let mut pen_down = false;
    for r in records {
        match value(r) {
            Ok(v) if v.is_finite() => {
                let cmd = if pen_down { 'L' } else { 'M' };
                if !d.is_empty() {
                    d.push(' ');
                }
                write!(d, "{cmd}{:.2},{:.2}", x.map(r.threshold), y.map(*v)).unwrap();
                pen_down = true;
            }
            _ => pen_down = false,
        }
    }
    d
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn panel(svg: &mut String, index: usize, metric: FairnessMetric, records: &[SweepRecord], optimal: Option<f64>) {
    let plot_w = PANEL_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x = Scale {
        lo: X_MIN,
        hi: X_MAX,
        out_lo: MARGIN_LEFT,
        out_hi: MARGIN_LEFT + plot_w,
    };
    let left = Scale {
        lo: 0.0,
        hi: 1.0,
        out_lo: MARGIN_TOP + plot_h,
        out_hi: MARGIN_TOP,
    };
    let defined: Vec<f64> = records
        .iter()
        .filter_map(|r| metric.value(r).as_ref().ok().copied())
        .filter(|v| v.is_finite())
        .collect();
    let (lo, hi) = value_range(&defined);
    let right = Scale { lo, hi, ..left };

    writeln!(
        svg,
        r#"<g class="panel" data-metric="{}" transform="translate({:.0},{:.0})">"#,
        metric.abbreviation(),
        index as f64 * PANEL_WIDTH,
        HEADER
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13" font-weight="bold">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(metric.abbreviation())
    )
    .unwrap();
    writeln!(
        svg,
        r##"<rect class="frame" x="{MARGIN_LEFT:.1}" y="{MARGIN_TOP:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#000000"/>"##
    )
    .unwrap();

    let bottom = MARGIN_TOP + plot_h;
    let mut ticks = String::new();
    for t in [0.2, 0.4, 0.6, 0.8] {
        let px = x.map(t);
        writeln!(
            ticks,
            r##"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="#000000"/><text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"##,
            bottom + 4.0,
            bottom + 15.0,
            tick_label(t)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<g class="x-axis">{ticks}<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">threshold</text></g>"#,
        MARGIN_LEFT + plot_w / 2.0,
        bottom + 30.0
    )
    .unwrap();

    let right_edge = MARGIN_LEFT + plot_w;
    let mut left_ticks = String::new();
    let mut right_ticks = String::new();
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let py = left.map(frac);
        writeln!(
            left_ticks,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{MARGIN_LEFT:.2}" y2="{py:.2}" stroke="{ACCURACY_COLOUR}"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10" fill="{ACCURACY_COLOUR}">{}</text>"#,
            MARGIN_LEFT - 4.0,
            MARGIN_LEFT - 6.0,
            py + 3.5,
            tick_label(frac)
        )
        .unwrap();
        let value = lo + frac * (hi - lo);
        writeln!(
            right_ticks,
            r#"<line x1="{right_edge:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="{FAIRNESS_COLOUR}"/><text x="{:.2}" y="{:.2}" font-size="10" fill="{FAIRNESS_COLOUR}">{}</text>"#,
            right_edge + 4.0,
            right_edge + 6.0,
            py + 3.5,
            tick_label(value)
        )
        .unwrap();
    }
    writeln!(svg, r#"<g class="left-axis" data-label="balanced accuracy">{left_ticks}</g>"#).unwrap();
    writeln!(
        svg,
        r#"<g class="right-axis" data-label="{}">{right_ticks}</g>"#,
        metric.name()
    )
    .unwrap();

    writeln!(
        svg,
        r#"<path class="balanced-accuracy" d="{}" fill="none" stroke="{ACCURACY_COLOUR}" stroke-width="1.5"/>"#,
        series_path(records, |r| &r.balanced_accuracy, x, left)
    )
    .unwrap();
    writeln!(
        svg,
        r#"<path class="fairness" d="{}" fill="none" stroke="{FAIRNESS_COLOUR}" stroke-width="1.5"/>"#,
        series_path(records, |r| metric.value(r), x, right)
    )
    .unwrap();
    if let Some(t) = optimal.filter(|t| (X_MIN..=X_MAX).contains(t)) {
        let px = x.map(t);
        writeln!(
            svg,
            r#"<line class="optimal-threshold" data-threshold="{t}" x1="{px:.2}" y1="{MARGIN_TOP:.2}" x2="{px:.2}" y2="{bottom:.2}" stroke="{MARKER_COLOUR}" stroke-dasharray="4,3"/>"#
        )
        .unwrap();
    }
    svg.push_str("</g>\n");
}

/// Standalone SVG of a sweep with an optional selected-threshold marker.
pub fn render_sweep_records(records: &[SweepRecord], optimal: Option<f64>, title: &str) -> String {
    let width = PANEL_WIDTH * FairnessMetric::ALL.len() as f64;
    let height = HEADER + PANEL_HEIGHT;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
    writeln!(svg, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title)).unwrap();
    writeln!(
        svg,
        r#"<g class="legend" transform="translate(10,34)"><line x1="0" y1="8" x2="20" y2="8" stroke="{ACCURACY_COLOUR}" stroke-width="2"/><text x="25" y="12" font-size="11">balanced accuracy (left axis)</text><line x1="200" y1="8" x2="220" y2="8" stroke="{FAIRNESS_COLOUR}" stroke-width="2"/><text x="225" y="12" font-size="11">fairness metric (right axis)</text><line x1="400" y1="8" x2="420" y2="8" stroke="{MARKER_COLOUR}" stroke-dasharray="4,3"/><text x="425" y="12" font-size="11">selected threshold</text></g>"#
    )
    .unwrap();
    for (i, metric) in FairnessMetric::ALL.into_iter().enumerate() {
        panel(&mut svg, i, metric, records, optimal);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Figure of the test-split sweep of one arm, marked at the threshold
/// selected on validation.
pub fn render_sweep_svg(result: &SweepResult, label: &str) -> String {
    let title = format!(
        "{label}: test split, threshold selected on validation by {}",
        result.selection_metric.abbreviation()
    );
    render_sweep_records(&result.test, Some(result.optimal_threshold), &title)
}
