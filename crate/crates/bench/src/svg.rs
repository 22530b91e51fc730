//! Hand-rolled SVG plots for the report stage.
//!
//! Rendering is a pure function of the input rows: fixed canvas, fixed
//! palette, coordinates printed with two decimals, series drawn in the
//! order given. Rendering the same rows twice yields identical bytes.

use crate::report::ReportRow;
use crate::runner::TimingRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 62.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 4] = ["#5b7d9e", "#b3543e", "#4e8a62", "#7a5c92"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Connect the points with a line (points are sorted by x first).
    pub connect: bool,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x_px(&self, x: f64) -> f64 {
        let span = self.x_max - self.x_min;
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        if span == 0.0 {
            MARGIN_LEFT + w * 0.5
        } else {
            MARGIN_LEFT + (x - self.x_min) / span * w
        }
    }

    fn y_px(&self, y: f64) -> f64 {
        let span = self.y_max - self.y_min;
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        if span == 0.0 {
            MARGIN_TOP + h * 0.5
        } else {
            MARGIN_TOP + (self.y_max - y) / span * h
        }
    }
}

fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 10.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a complete scatter/line figure. The y axis is pinned to the
/// given range; the x axis spans the data with a small pad.
pub fn render_figure(
    title: &str,
    x_label: &str,
    y_label: &str,
    y_range: (f64, f64),
    series: &[Series],
) -> String {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let x_lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let x_hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x_min, x_max) = if xs.is_empty() {
        (0.0, 1.0)
    } else if x_lo == x_hi {
        (x_lo - 0.5, x_hi + 0.5)
    } else {
        let pad = (x_hi - x_lo) * 0.06;
        ((x_lo - pad).max(0.0f64.min(x_lo)), x_hi + pad)
    };
    let frame = Frame {
        x_min,
        x_max,
        y_min: y_range.0,
        y_max: y_range.1,
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        fmt2(WIDTH / 2.0),
        escape(title)
    ));

    let plot_bottom = HEIGHT - MARGIN_BOTTOM;
    let plot_right = WIDTH - MARGIN_RIGHT;
    svg.push_str(&format!(
        "  <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444444\"/>\n",
        fmt2(MARGIN_LEFT),
        fmt2(MARGIN_TOP),
        fmt2(plot_right - MARGIN_LEFT),
        fmt2(plot_bottom - MARGIN_TOP)
    ));

    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let xp = frame.x_px(xv);
        let yp = frame.y_px(yv);
        svg.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#444444\"/>\n",
            fmt2(plot_bottom),
            fmt2(plot_bottom + 5.0),
            x = fmt2(xp)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            fmt2(xp),
            fmt2(plot_bottom + 18.0),
            fmt_tick(xv)
        ));
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#444444\"/>\n",
            fmt2(MARGIN_LEFT - 5.0),
            fmt2(MARGIN_LEFT),
            y = fmt2(yp)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            fmt2(MARGIN_LEFT - 9.0),
            fmt2(yp + 4.0),
            fmt_tick(yv)
        ));
    }

    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        fmt2((MARGIN_LEFT + plot_right) / 2.0),
        fmt2(HEIGHT - 14.0),
        escape(x_label)
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{mid}\" text-anchor=\"middle\" font-size=\"12\" \
         transform=\"rotate(-90 16 {mid})\">{}</text>\n",
        escape(y_label),
        mid = fmt2((MARGIN_TOP + plot_bottom) / 2.0)
    ));

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut pts = s.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        if s.connect && pts.len() >= 2 {
            let path: Vec<String> = pts
                .iter()
                .map(|(x, y)| format!("{},{}", fmt2(frame.x_px(*x)), fmt2(frame.y_px(*y))))
                .collect();
            svg.push_str(&format!(
                "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            ));
        }
        for (x, y) in &pts {
            svg.push_str(&format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{color}\"/>\n",
                fmt2(frame.x_px(*x)),
                fmt2(frame.y_px(*y))
            ));
        }
        let ly = MARGIN_TOP + 14.0 + 18.0 * si as f64;
        svg.push_str(&format!(
            "  <circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{color}\"/>\n",
            fmt2(plot_right - 150.0),
            fmt2(ly - 4.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            fmt2(plot_right - 140.0),
            fmt2(ly),
            escape(&s.label)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

/// Success against per-generation step budget for one model kind:
/// reduced-step baselines on one curve, retrieval cells on the other.
/// `None` when fewer than two methods were evaluated.
pub fn steps_figure(kind: &str, rows: &[ReportRow]) -> Option<String> {
    let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.kind == kind).collect();
    if mine.len() < 2 {
        return None;
    }
    let baseline: Vec<(f64, f64)> = mine
        .iter()
        .filter(|r| r.method.starts_with("baseline"))
        .map(|r| (r.steps as f64, r.success))
        .collect();
    let retrieval: Vec<(f64, f64)> = mine
        .iter()
        .filter(|r| r.method.starts_with("ragdp"))
        .map(|r| (r.steps as f64, r.success))
        .collect();
    let mut series = Vec::new();
    if !baseline.is_empty() {
        series.push(Series {
            label: "reduced-step baseline".to_string(),
            points: baseline,
            connect: true,
        });
    }
    if !retrieval.is_empty() {
        series.push(Series {
            label: "retrieval warm start".to_string(),
            points: retrieval,
            connect: true,
        });
    }
    Some(render_figure(
        &format!("{} success vs denoising budget", kind.to_uppercase()),
        "network evaluations per generation",
        "success rate",
        (0.0, 1.0),
        &series,
    ))
}

/// Success against measured generation time, one point per method.
/// `None` when fewer than two methods carry timing data.
pub fn timing_figure(rows: &[ReportRow], timing: &[TimingRow]) -> Option<String> {
    let mean_seconds = |kind: &str, method: &str| -> Option<f64> {
        let mine: Vec<&TimingRow> = timing
            .iter()
            .filter(|t| t.kind == kind && t.method == method)
            .collect();
        let gens: u64 = mine.iter().map(|t| t.generations).sum();
        if gens == 0 {
            return None;
        }
        let total: f64 = mine
            .iter()
            .map(|t| t.mean_gen_seconds * t.generations as f64)
            .sum();
        Some(total / gens as f64)
    };
    let mut series = Vec::new();
    for kind in ["vp", "ve"] {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.kind == kind)
            .filter_map(|r| mean_seconds(kind, &r.method).map(|s| (s, r.success)))
            .collect();
        if !points.is_empty() {
            series.push(Series {
                label: format!("{} methods", kind),
                points,
                connect: false,
            });
        }
    }
    if series.iter().map(|s| s.points.len()).sum::<usize>() < 2 {
        return None;
    }
    Some(render_figure(
        "success vs generation time",
        "seconds per generation call",
        "success rate",
        (0.0, 1.0),
        &series,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_row(kind: &str, method: &str, steps: usize, success: f64) -> ReportRow {
        ReportRow {
            kind: kind.into(),
            method: method.into(),
            steps,
            r: 0.0,
            seeds: 3,
            episodes: 168,
            invalid: 0,
            success,
            recovery: Some(1.0),
            speedup: Some(1.0),
            evals_per_generation: steps as f64,
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let rows = vec![
            report_row("vp", "baseline-full", 100, 0.93),
            report_row("vp", "baseline-fast-5", 5, 0.41),
            report_row("vp", "ragdp-vp-r0.95", 5, 0.88),
        ];
        let a = steps_figure("vp", &rows).unwrap();
        let b = steps_figure("vp", &rows).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg "));
        assert!(a.ends_with("</svg>\n"));
    }

    #[test]
    fn points_stay_inside_the_frame() {
        let rows = vec![
            report_row("ve", "baseline-full", 40, 1.0),
            report_row("ve", "ragdp-ve-r0.875", 6, 0.0),
        ];
        let svg = steps_figure("ve", &rows).unwrap();
        for part in svg.split("cx=\"").skip(1) {
            let cx: f64 = part.split('"').next().unwrap().parse().unwrap();
            assert!((0.0..=WIDTH).contains(&cx));
        }
        for part in svg.split("cy=\"").skip(1) {
            let cy: f64 = part.split('"').next().unwrap().parse().unwrap();
            assert!((0.0..=HEIGHT).contains(&cy));
        }
    }

    #[test]
    fn single_method_has_no_figure() {
        let rows = vec![report_row("vp", "baseline-full", 100, 0.9)];
        assert!(steps_figure("vp", &rows).is_none());
        assert!(timing_figure(&rows, &[]).is_none());
    }

    #[test]
    fn timing_figure_weighs_seeds_by_generation_count() {
        let rows = vec![
            report_row("vp", "baseline-full", 100, 0.9),
            report_row("vp", "ragdp-vp-r0.9", 10, 0.85),
        ];
        let timing = vec![
            TimingRow {
                kind: "vp".into(),
                method: "baseline-full".into(),
                train_seed: 0,
                generations: 10,
                mean_gen_seconds: 0.4,
            },
            TimingRow {
                kind: "vp".into(),
                method: "ragdp-vp-r0.9".into(),
                train_seed: 0,
                generations: 10,
                mean_gen_seconds: 0.04,
            },
        ];
        let svg = timing_figure(&rows, &timing).unwrap();
        assert!(svg.contains("seconds per generation call"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
