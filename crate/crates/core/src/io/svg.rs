//! Static SVG heatmaps of state-marginal beliefs.

use std::fmt::Write as _;

use crate::mdp::{GridLayout, StateId};

const CELL: usize = 22;
const LOW: (f64, f64, f64) = (255.0, 255.0, 255.0);
const HIGH: (f64, f64, f64) = (8.0, 48.0, 107.0);

#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapMeta {
    pub title: String,
    pub config_hash: String,
    pub seed: u64,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn color(t: f64) -> String {
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(LOW.0, HIGH.0), mix(LOW.1, HIGH.1), mix(LOW.2, HIGH.2))
}

/// Sums `values[s]` into the layout cell of every state `keep` accepts and
/// draws the grid with a linear white-to-blue scale. Rows and columns left
/// without any kept state are dropped. Identical inputs give identical
/// bytes.
pub fn render_heatmap(
    layout: &GridLayout,
    values: &[f64],
    keep: &dyn Fn(StateId) -> bool,
    meta: &HeatmapMeta,
) -> String {
    let mut grid: Vec<Option<f64>> = vec![None; layout.rows * layout.cols];
    for (s, cell) in layout.cells.iter().enumerate() {
        if let (Some((r, c)), Some(&v)) = (cell, values.get(s)) {
            if keep(s) {
                let slot = &mut grid[r * layout.cols + c];
                *slot = Some(slot.unwrap_or(0.0) + v);
            }
        }
    }
    let rows: Vec<usize> = (0..layout.rows)
        .filter(|&r| (0..layout.cols).any(|c| grid[r * layout.cols + c].is_some()))
        .collect();
    let cols: Vec<usize> = (0..layout.cols)
        .filter(|&c| (0..layout.rows).any(|r| grid[r * layout.cols + c].is_some()))
        .collect();
    let drawn: Vec<f64> = grid.iter().flatten().copied().collect();
    let (min, max) = if drawn.is_empty() {
        (0.0, 0.0)
    } else {
        (
            drawn.iter().copied().fold(f64::INFINITY, f64::min),
            drawn.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let span = max - min;

    let label_w = 7 * layout.row_labels.iter().map(|l| l.len()).max().unwrap_or(0) + 12;
    let col_label_h = 7 * layout.col_labels.iter().map(|l| l.len()).max().unwrap_or(0) + 12;
    let top = 40 + col_label_h;
    let grid_w = cols.len() * CELL;
    let grid_h = rows.len() * CELL;
    let legend_y = top + grid_h + 20;
    let width = (label_w + grid_w + 20).max(320);
    let height = legend_y + 60;

    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(w, "<title>{}</title>", escape(&meta.title));
    let _ = writeln!(
        w,
        "<desc>config_hash={} seed={} min={min} max={max}</desc>",
        escape(&meta.config_hash),
        meta.seed
    );
    let _ = writeln!(w, r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##);
    let _ = writeln!(w, r#"<text x="8" y="16">{}</text>"#, escape(&meta.title));
    let _ = writeln!(
        w,
        r##"<text x="8" y="30" fill="#555555">config {} seed {}</text>"##,
        escape(&meta.config_hash),
        meta.seed
    );
    for (j, &c) in cols.iter().enumerate() {
        let x = label_w + j * CELL + CELL / 2 + 4;
        let y = top - 6;
        let label = layout.col_labels.get(c).map(String::as_str).unwrap_or("");
        let _ = writeln!(
            w,
            r#"<text x="{x}" y="{y}" transform="rotate(-90 {x} {y})">{}</text>"#,
            escape(label)
        );
    }
    for (i, &r) in rows.iter().enumerate() {
        let y = top + i * CELL;
        let label = layout.row_labels.get(r).map(String::as_str).unwrap_or("");
        let _ = writeln!(
            w,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 6,
            y + CELL / 2 + 4,
            escape(label)
        );
        for (j, &c) in cols.iter().enumerate() {
            if let Some(v) = grid[r * layout.cols + c] {
                let t = if span > 0.0 { (v - min) / span } else { 0.0 };
                let _ = writeln!(
                    w,
                    r##"<rect x="{}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#cccccc"><title>{v}</title></rect>"##,
                    label_w + j * CELL,
                    color(t)
                );
            }
        }
    }
    let _ = writeln!(
        w,
        r##"<defs><linearGradient id="scale"><stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"##,
        color(0.0),
        color(1.0)
    );
    let _ = writeln!(
        w,
        r##"<rect x="8" y="{legend_y}" width="200" height="12" fill="url(#scale)" stroke="#999999"/>"##
    );
    let _ = writeln!(w, r#"<text x="8" y="{}">min {min}</text>"#, legend_y + 28);
    let _ = writeln!(
        w,
        r#"<text x="208" y="{}" text-anchor="end">max {max}</text>"#,
        legend_y + 44
    );
    out.push_str("</svg>\n");
    out
}
