//! Text tables, PCC CSV and the SVG heatmap.

use crate::data::Split;
use crate::model::Variant;
use crate::train::{LossBreakdown, MetricsReport};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// JSON document written by `evaluate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub split: Split,
    pub n_clips: usize,
    pub loss: LossBreakdown,
    pub metrics: MetricsReport,
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.digits$}"))
}

/// Accuracy and rating errors in one row, then F-scores and AUC per level.
pub fn metrics_table(variant: Variant, m: &MetricsReport) -> String {
    let cae = m.cae.as_ref();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<9} | {:>10} | {:>10} | {:>8} | {:>8} | {:>8}",
        "Graph", "24 fAE Acc", "7 cAE Acc", "MSE", "MAE", "R2"
    );
    let _ = writeln!(s, "{}", "-".repeat(68));
    let _ = writeln!(
        s,
        "{:<9} | {:>10} | {:>10} | {:>8} | {:>8} | {:>8}",
        variant.as_str(),
        cell(Some(m.fae.acc), 3),
        cell(cae.map(|c| c.acc), 3),
        cell(Some(m.ar.mse), 3),
        cell(Some(m.ar.mae), 3),
        cell(m.ar.r2, 3),
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<9} | {:>10} | {:>10} | {:>10}",
        "Level", "F micro", "F macro", "AUC"
    );
    let _ = writeln!(s, "{}", "-".repeat(48));
    let mut level = |name: &str, c: Option<&crate::train::ClassificationMetrics>| {
        let _ = writeln!(
            s,
            "{:<9} | {:>10} | {:>10} | {:>10}",
            name,
            cell(c.map(|c| c.f_micro), 3),
            cell(c.map(|c| c.f_macro), 3),
            cell(c.and_then(|c| c.auc_macro), 4),
        );
    };
    level("24 fAE", Some(&m.fae));
    level("7 cAE", cae);
    s
}

/// Header of output labels, then one line of values per matrix row.
pub fn pcc_csv(labels: &[String], matrix: &[f64]) -> String {
    let k = labels.len();
    assert_eq!(matrix.len(), k * k);
    let mut s = labels.join(",");
    s.push('\n');
    for row in matrix.chunks(k) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

const NEG: [f64; 3] = [33.0, 102.0, 172.0];
const MID: [f64; 3] = [247.0, 247.0, 247.0];
const POS: [f64; 3] = [178.0, 24.0, 43.0];

/// Blue (-1) through white (0) to red (+1).
pub fn diverging_color(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (a, b, t) = if v < 0.0 {
        (MID, NEG, -v)
    } else {
        (MID, POS, v)
    };
    let c: Vec<u8> = (0..3)
        .map(|i| (a[i] + (b[i] - a[i]) * t).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn heatmap_svg(labels: &[String], matrix: &[f64]) -> String {
    let k = labels.len();
    assert_eq!(matrix.len(), k * k);
    let cell = 16.0;
    let margin = 150.0;
    let bar_w = 16.0;
    let side = margin + k as f64 * cell;
    let width = side + 70.0;
    let height = side + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="9">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, label) in labels.iter().enumerate() {
        let c = margin + (i as f64 + 0.5) * cell;
        let l = escape(label);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{c:.1}" text-anchor="end" dominant-baseline="middle">{l}</text>"#,
            margin - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate({c:.1},{:.1}) rotate(-90)" dominant-baseline="middle">{l}</text>"#,
            margin - 4.0
        );
    }
    for i in 0..k {
        for j in 0..k {
            let v = matrix[i * k + j];
            let _ = writeln!(
                s,
                r#"<rect class="cell" data-row="{i}" data-col="{j}" x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="{}"><title>{} / {}: {v:.4}</title></rect>"#,
                margin + j as f64 * cell,
                margin + i as f64 * cell,
                diverging_color(v),
                escape(&labels[i]),
                escape(&labels[j]),
            );
        }
    }
    let x0 = side + 16.0;
    let steps = 20;
    let h = k as f64 * cell / steps as f64;
    for n in 0..steps {
        let v = 1.0 - 2.0 * (n as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.1}" y="{:.1}" width="{bar_w}" height="{h:.2}" fill="{}"/>"#,
            margin + n as f64 * h,
            diverging_color(v)
        );
    }
    for (v, y) in [
        (1, margin),
        (0, margin + k as f64 * cell / 2.0),
        (-1, margin + k as f64 * cell),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" dominant-baseline="middle">{v:+}</text>"#,
            x0 + bar_w + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{classification_metrics, regression_metrics};

    #[test]
    fn colormap_endpoints() {
        assert_eq!(diverging_color(1.0), "#b2182b");
        assert_eq!(diverging_color(0.0), "#f7f7f7");
        assert_eq!(diverging_color(-1.0), "#2166ac");
        assert_eq!(diverging_color(7.0), diverging_color(1.0));
    }

    #[test]
    fn table_marks_missing_coarse() {
        let fae = classification_metrics(&[0.9, 0.1], &[true, false], 1, 0.5);
        let ar = regression_metrics(&[1.0], &[2.0]);
        let m = MetricsReport { fae, cae: None, ar };
        let t = metrics_table(Variant::Far, &m);
        let row = t.lines().nth(2).unwrap();
        assert!(row.starts_with("fAR"));
        assert_eq!(row.matches("N/A").count(), 2, "{row}");
        assert!(t
            .lines()
            .any(|l| l.starts_with("7 cAE") && l.matches("N/A").count() == 3));
    }

    #[test]
    fn csv_and_svg_shapes() {
        let labels: Vec<String> = ["a", "b<"].iter().map(|s| s.to_string()).collect();
        let m = [1.0, -0.5, -0.5, 1.0];
        let csv = pcc_csv(&labels, &m);
        assert_eq!(csv, "a,b<\n1,-0.5\n-0.5,1\n");
        let svg = heatmap_svg(&labels, &m);
        assert_eq!(svg.matches(r#"class="cell""#).count(), 4);
        assert!(svg.contains("b&lt;"));
    }
}
