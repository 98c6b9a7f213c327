//! Dependency-free SVG line charts for the damage/improvement curves.
//!
//! The output is a single self-contained `<svg>` element: no scripts, no
//! external fonts, safe to drop next to the CSV artifacts.

use crate::evaluation::CellSummary;
use crate::{Error, Result};

/// One plotted line: a label and its (x, y) points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 56.0;
const PALETTE: [&str; 8] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" { "0".into() } else { s.into() }
}

/// Pad a data range so points never sit on the frame; widen degenerate
/// ranges so the scale stays finite.
fn padded(min: f64, max: f64) -> (f64, f64) {
    if max > min {
        let pad = 0.05 * (max - min);
        (min - pad, max + pad)
    } else {
        (min - 0.5, max + 0.5)
    }
}

/// Render a titled line chart of every series. Errors when no series has
/// a point or any coordinate is non-finite.
pub fn render_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<String> {
    if series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::invalid("nothing to plot: every series is empty"));
    }
    let all = series.iter().flat_map(|s| &s.points);
    if series.iter().flat_map(|s| &s.points).any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("plot coordinates must be finite"));
    }
    let (mut x_min, mut x_max, mut y_min, mut y_max) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    let (x_min, x_max) = padded(x_min, x_max);
    let (y_min, y_max) = padded(y_min, y_max);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let py = |y: f64| MARGIN_T + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        esc(title)
    ));

    // Frame, ticks, and grid.
    out.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333\"/>\n"
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_min + f * (x_max - x_min);
        let yv = y_min + f * (y_max - y_min);
        let (gx, gy) = (px(xv), py(yv));
        if i > 0 && i < 4 {
            out.push_str(&format!(
                "<line x1=\"{gx}\" y1=\"{MARGIN_T}\" x2=\"{gx}\" y2=\"{}\" stroke=\"#ddd\"/>\n",
                MARGIN_T + plot_h
            ));
            out.push_str(&format!(
                "<line x1=\"{MARGIN_L}\" y1=\"{gy}\" x2=\"{}\" y2=\"{gy}\" stroke=\"#ddd\"/>\n",
                MARGIN_L + plot_w
            ));
        }
        out.push_str(&format!(
            "<text x=\"{gx}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T + plot_h + 18.0,
            fmt_tick(xv)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 8.0,
            gy + 4.0,
            fmt_tick(yv)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0,
        esc(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        esc(y_label)
    ));

    // Series lines, markers, legend.
    let legend_x = MARGIN_L + plot_w + 16.0;
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if s.points.len() > 1 {
            let pts: Vec<String> =
                s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                pts.join(" ")
            ));
        }
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            ));
        }
        let ly = MARGIN_T + 14.0 + si as f64 * 18.0;
        out.push_str(&format!(
            "<line x1=\"{legend_x}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            legend_x + 22.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{}</text>\n",
            legend_x + 28.0,
            ly + 4.0,
            esc(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Chart one damage/improvement curve per method from aggregated cells
/// (one experiment slice: callers pre-filter to a single group size, beta,
/// and threshold). Points within a method follow ascending damage.
pub fn curve_chart(title: &str, cells: &[CellSummary]) -> Result<String> {
    let mut series: Vec<Series> = Vec::new();
    for c in cells {
        let label = c.method.tag();
        let slot = match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s,
            None => {
                series.push(Series { label: label.into(), points: Vec::new() });
                series.last_mut().unwrap()
            }
        };
        slot.points.push((c.dtne_mean, c.ioip_mean));
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    render_chart(title, "damage to neighbor experience", "interaction probability improvement", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::Method;

    /// Tiny well-formedness check: every tag closes, nesting is proper,
    /// and there is exactly one root element.
    fn assert_well_formed(svg: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut roots = 0;
        let mut rest = svg;
        while let Some(start) = rest.find('<') {
            let text = &rest[..start];
            assert!(!text.contains('>'), "stray `>` in text: {text:?}");
            if let Some(amp) = text.find('&') {
                let tail = &text[amp..];
                assert!(
                    ["&amp;", "&lt;", "&gt;", "&quot;", "&apos;"].iter().any(|e| tail.starts_with(e)),
                    "unescaped & in {tail:?}"
                );
            }
            let end = rest[start..].find('>').expect("unterminated tag") + start;
            let tag = &rest[start + 1..end];
            assert!(!tag.is_empty() && !tag.contains('<'));
            if let Some(name) = tag.strip_prefix('/') {
                assert_eq!(stack.pop().as_deref(), Some(name), "mismatched close </{name}>");
            } else if !tag.ends_with('/') {
                let name: String = tag.chars().take_while(|c| !c.is_whitespace()).collect();
                if stack.is_empty() {
                    roots += 1;
                }
                stack.push(name);
            } else if stack.is_empty() {
                roots += 1;
            }
            rest = &rest[end + 1..];
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
        assert_eq!(roots, 1, "expected a single root element");
    }

    #[test]
    fn charts_are_well_formed_and_draw_every_series() {
        let series = vec![
            Series { label: "A & B".into(), points: vec![(0.0, 0.1), (1.0, 0.3), (2.0, 0.2)] },
            Series { label: "<cheap>".into(), points: vec![(0.5, -0.1), (1.5, 0.4)] },
        ];
        let svg = render_chart("trade-off", "damage", "improvement", &series).unwrap();
        assert_well_formed(&svg);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(svg.contains("A &amp; B"));
        assert!(svg.contains("&lt;cheap&gt;"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn degenerate_inputs_still_render_or_error_cleanly() {
        // A single point has zero-width ranges on both axes.
        let one = vec![Series { label: "only".into(), points: vec![(1.0, 1.0)] }];
        let svg = render_chart("t", "x", "y", &one).unwrap();
        assert_well_formed(&svg);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));

        assert!(render_chart("t", "x", "y", &[]).is_err());
        assert!(render_chart("t", "x", "y", &[Series { label: "e".into(), points: vec![] }]).is_err());
        let bad = vec![Series { label: "b".into(), points: vec![(f64::NAN, 0.0)] }];
        assert!(render_chart("t", "x", "y", &bad).is_err());
    }

    #[test]
    fn method_curves_group_cells_and_order_points_by_damage() {
        let cell = |method: Method, gamma: f64, dtne: f64, ioip: f64| CellSummary {
            method,
            gamma,
            group_size: 50,
            beta: 10.0,
            t: 1.0,
            ioip_mean: ioip,
            ioip_se: 0.0,
            dtne_mean: dtne,
            dtne_se: 0.0,
            n_specs: 3,
        };
        let cells = vec![
            cell(Method::Oracle, 1.0, 0.5, 0.2),
            cell(Method::Oracle, 0.0, 2.0, 0.5),
            cell(Method::NIRec, 0.0, 1.5, 0.3),
        ];
        let svg = curve_chart("slice", &cells).unwrap();
        assert_well_formed(&svg);
        assert!(svg.contains("Oracle") && svg.contains("NIRec"));
        // Oracle has two points joined low-damage first.
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
