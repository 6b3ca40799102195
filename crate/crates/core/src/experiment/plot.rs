//! Dependency-free SVG rendering of the accuracy matrix and curves.

use std::fmt::Write;

use super::CrossEvalMatrix;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White to deep blue.
fn shade(acc: f64) -> String {
    let t = acc.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Heatmap with one labelled `<rect class="cell">` per model and silo.
pub fn matrix_svg(m: &CrossEvalMatrix) -> String {
    let (cell_w, cell_h, left, top) = (90.0, 36.0, 150.0, 60.0);
    let width = left + cell_w * m.silos.len() as f64 + 20.0;
    let height = top + cell_h * m.models.len() as f64 + 20.0;
    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(w, r#"<text x="{left}" y="20" font-size="14">Test accuracy by model and silo</text>"#).unwrap();
    for (j, silo) in m.silos.iter().enumerate() {
        let x = left + cell_w * (j as f64 + 0.5);
        writeln!(w, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, top - 8.0, esc(silo)).unwrap();
    }
    for (i, (model, row)) in m.models.iter().zip(&m.cells).enumerate() {
        let y = top + cell_h * i as f64;
        writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + cell_h / 2.0 + 4.0,
            esc(model)
        )
        .unwrap();
        for (j, cell) in row.iter().enumerate() {
            let x = left + cell_w * j as f64;
            let (fill, label, ink) = match cell {
                Some(a) => (
                    shade(*a),
                    format!("{:.1}%", a * 100.0),
                    if *a > 0.55 { "#ffffff" } else { "#000000" },
                ),
                None => ("#dddddd".to_string(), "failed".to_string(), "#000000"),
            };
            writeln!(
                w,
                r##"<rect class="cell" x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="#ffffff"/>"##
            )
            .unwrap();
            writeln!(
                w,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{label}</text>"#,
                x + cell_w / 2.0,
                y + cell_h / 2.0 + 4.0
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Line chart of named accuracy-per-round series.
pub fn curves_svg(series: &[(&str, &[f64])]) -> String {
    let (width, height, left, right, top, bottom) = (560.0, 340.0, 60.0, 140.0, 30.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let rounds = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(1);
    let x_of = |r: usize| {
        if rounds == 1 {
            left + plot_w / 2.0
        } else {
            left + plot_w * r as f64 / (rounds - 1) as f64
        }
    };
    let y_of = |a: f64| top + plot_h * (1.0 - a.clamp(0.0, 1.0));

    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        w,
        r##"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444444"/>"##
    )
    .unwrap();
    for k in 0..=4 {
        let a = k as f64 / 4.0;
        let y = y_of(a);
        writeln!(
            w,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>"##,
            left + plot_w
        )
        .unwrap();
        writeln!(w, r#"<text x="{}" y="{}" text-anchor="end">{a:.2}</text>"#, left - 6.0, y + 4.0).unwrap();
    }
    for r in 0..rounds {
        writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x_of(r),
            top + plot_h + 16.0,
            r + 1
        )
        .unwrap();
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#,
        left + plot_w / 2.0,
        height - 10.0
    )
    .unwrap();
    for (k, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(r, a)| format!("{:.2},{:.2}", x_of(r), y_of(*a)))
            .collect();
        writeln!(
            w,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        let ly = top + 16.0 * (k as f64 + 1.0);
        writeln!(
            w,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            left + plot_w + 12.0,
            left + plot_w + 32.0
        )
        .unwrap();
        writeln!(w, r#"<text x="{}" y="{}">{}</text>"#, left + plot_w + 38.0, ly + 4.0, esc(name)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
