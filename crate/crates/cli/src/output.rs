//! Files written by the commands: CSV tables, JSON reports and SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::pipeline::Evaluation;
use crate::{CliError, Result};

pub const RECALL_LEVELS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, &text)
}

/// Pairwise directions, then the fused `view->rest` directions when there are
/// more than two views (with two, they repeat the pairwise rows).
fn directions(eval: &Evaluation) -> impl Iterator<Item = &mvembed::eval::RetrievalResult> {
    let fused: &[_] = if eval.fused.len() > 2 { &eval.fused } else { &[] };
    eval.retrieval.iter().chain(fused)
}

pub fn map_csv(eval: &Evaluation) -> String {
    let mut s = String::from("direction,map\n");
    for r in directions(eval) {
        writeln!(s, "{},{}", Evaluation::direction(r), r.map).unwrap();
    }
    s
}

pub fn pr_csv(eval: &Evaluation) -> String {
    let mut s = String::from("direction,recall,precision\n");
    for r in directions(eval) {
        for (level, p) in RECALL_LEVELS.iter().zip(&r.curve) {
            writeln!(s, "{},{level:.1},{p}", Evaluation::direction(r)).unwrap();
        }
    }
    s
}

pub fn accuracy_csv(eval: &Evaluation) -> String {
    let mut s = String::from("view,accuracy\n");
    for (view, acc) in &eval.accuracy {
        writeln!(s, "{view},{acc}").unwrap();
    }
    if let Some(acc) = eval.fused_accuracy {
        writeln!(s, "fused,{acc}").unwrap();
    }
    s
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of named series over a shared x grid, both axes on [0, 1].
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + x.clamp(0.0, 1.0) * pw;
    let py = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    )
    .unwrap();
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            LEFT,
            py(t),
            LEFT + pw,
            py(t)
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t:.1}</text>"#, LEFT - 6.0, py(t) + 4.0).unwrap();
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.1}</text>"#, px(t), TOP + ph + 18.0).unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = TOP + 10.0 + 18.0 * k as f64;
        writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            LEFT + pw + 12.0,
            LEFT + pw + 32.0
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            LEFT + pw + 38.0,
            ly + 4.0,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub fn pr_svg(eval: &Evaluation) -> String {
    let series: Vec<(String, Vec<f64>)> = directions(eval)
        .map(|r| (Evaluation::direction(r), r.curve.clone()))
        .collect();
    line_chart_svg("11-point interpolated precision-recall", "Recall", "Precision", &RECALL_LEVELS, &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_fixed_viewport_and_one_polyline_per_series() {
        let xs = [0.0, 0.5, 1.0];
        let series = vec![("a->b".to_string(), vec![1.0, 0.5, 0.2]), ("b->a".to_string(), vec![0.9, 0.4, 0.1])];
        let svg = line_chart_svg("t", "Recall", "Precision", &xs, &series);
        assert!(svg.contains(r#"viewBox="0 0 640 480""#));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a-&gt;b"));
        assert!(svg.contains(">Recall<") && svg.contains(">Precision<"));
    }
}
