//! Standalone SVG line plots of CSV series.
//!
//! The output depends only on the input file and the spec. Numbers are
//! printed with fixed precision, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed series: {0}")]
    MalformedSeries(String),
}

/// Which columns to draw and how.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub x_column: usize,
    pub y_columns: Vec<usize>,
}

/// A parsed CSV series: `#` comment lines, header, numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(text: &str) -> Result<Table, PlotError> {
    let comments = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| PlotError::MalformedSeries(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| PlotError::MalformedSeries(e.to_string()))?;
        let row = record
            .iter()
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| PlotError::MalformedSeries(format!("row {}: {cell:?} is not a number", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { comments, header, rows })
}

/// Read `csv_path` and write the plot to `svg_path`. The CSV comment lines
/// are carried over into the SVG.
pub fn emit_plot(csv_path: &Path, svg_path: &Path, spec: &PlotSpec) -> Result<(), PlotError> {
    let table = read_table(&fs::read_to_string(csv_path)?)?;
    fs::write(svg_path, render_svg(&table, spec)?)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-3..1e4).contains(&v.abs()) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

pub fn render_svg(table: &Table, spec: &PlotSpec) -> Result<String, PlotError> {
    if table.rows.is_empty() {
        return Err(PlotError::MalformedSeries("series has no rows".into()));
    }
    let ncol = table.header.len();
    for &c in std::iter::once(&spec.x_column).chain(&spec.y_columns) {
        if c >= ncol {
            return Err(PlotError::MalformedSeries(format!("column {c} out of range ({ncol} columns)")));
        }
    }
    if let Some(i) = table.rows.iter().position(|r| r.len() != ncol) {
        return Err(PlotError::MalformedSeries(format!("row {} has the wrong width", i + 1)));
    }
    if spec.y_columns.is_empty() {
        return Err(PlotError::MalformedSeries("no y columns selected".into()));
    }

    let ty = |v: f64| if spec.log_y { v.log10() } else { v };
    let usable = |v: f64| v.is_finite() && (!spec.log_y || v > 0.0);
    let xs: Vec<f64> = table.rows.iter().map(|r| r[spec.x_column]).collect();
    let ys: Vec<f64> = table
        .rows
        .iter()
        .flat_map(|r| spec.y_columns.iter().map(move |&c| r[c]))
        .filter(|&v| usable(v))
        .map(ty)
        .collect();
    if ys.is_empty() || !xs.iter().any(|x| x.is_finite()) {
        return Err(PlotError::MalformedSeries("nothing to draw".into()));
    }
    let fmin = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).fold(f64::INFINITY, f64::min);
    let fmax = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = padded(fmin(&xs), fmax(&xs));
    let (y0, y1) = if spec.log_y {
        let (lo, hi) = (fmin(&ys).floor(), fmax(&ys).ceil());
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    } else {
        padded(fmin(&ys), fmax(&ys))
    };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    for c in &table.comments {
        // "--" may not appear inside an XML comment.
        let _ = writeln!(s, "<!-- {} -->", c.replace("--", "- -"));
    }
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    for i in 0..=5 {
        let x = x0 + (x1 - x0) * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#ccc"/><text x="{0:.2}" y="{3:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{4}</text>"##,
            px(x),
            TOP,
            TOP + ph,
            TOP + ph + 16.0,
            tick_label(x)
        );
    }
    let y_ticks: Vec<(f64, String)> = if spec.log_y {
        let step = ((y1 - y0) / 8.0).ceil().max(1.0);
        let mut v = Vec::new();
        let mut k = y0;
        while k <= y1 + 1e-9 {
            v.push((k, format!("1e{}", k as i64)));
            k += step;
        }
        v
    } else {
        (0..=5)
            .map(|i| {
                let y = y0 + (y1 - y0) * i as f64 / 5.0;
                (y, tick_label(y))
            })
            .collect()
    };
    for (y, label) in y_ticks {
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{2:.2}" x2="{1:.2}" y2="{2:.2}" stroke="#ccc"/><text x="{3:.2}" y="{4:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{5}</text>"##,
            LEFT,
            LEFT + pw,
            py(y),
            LEFT - 6.0,
            py(y) + 4.0,
            label
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {0:.2})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(&spec.y_label)
    );

    for (k, &c) in spec.y_columns.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        // Unusable points (non-finite, or nonpositive on a log axis) break
        // the line.
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for r in &table.rows {
            let (x, y) = (r[spec.x_column], r[c]);
            if x.is_finite() && usable(y) {
                runs.last_mut().unwrap().push((px(x), py(ty(y))));
            } else if !runs.last().unwrap().is_empty() {
                runs.push(Vec::new());
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="{color}" stroke-width="2"/><text x="{3:.2}" y="{4:.2}" font-family="sans-serif" font-size="12">{5}</text>"#,
            LEFT + pw + 12.0,
            ly,
            LEFT + pw + 32.0,
            LEFT + pw + 38.0,
            ly + 4.0,
            escape(&table.header[c])
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(log_y: bool) -> PlotSpec {
        PlotSpec {
            title: "decay".into(),
            x_label: "n".into(),
            y_label: "D_n".into(),
            log_y,
            x_column: 0,
            y_columns: vec![1],
        }
    }

    #[test]
    fn reads_comments_header_and_rows() {
        let t = read_table("# seed = 3\nn,d\n0,1\n1,0.5\n").unwrap();
        assert_eq!(t.comments, vec!["seed = 3"]);
        assert_eq!(t.header, vec!["n", "d"]);
        assert_eq!(t.rows, vec![vec![0.0, 1.0], vec![1.0, 0.5]]);
    }

    #[test]
    fn rejects_text_cells() {
        assert!(matches!(read_table("n,d\n0,abc\n"), Err(PlotError::MalformedSeries(_))));
    }

    #[test]
    fn empty_series_is_malformed() {
        let t = read_table("n,d\n").unwrap();
        assert!(matches!(render_svg(&t, &spec(false)), Err(PlotError::MalformedSeries(_))));
    }

    #[test]
    fn geometric_decay_is_a_straight_line_on_log_axes() {
        let mut text = String::from("n,d\n");
        for n in 0..=10 {
            text += &format!("{n},{}\n", 0.5f64.powi(n));
        }
        let svg = render_svg(&read_table(&text).unwrap(), &spec(true)).unwrap();
        let pts: Vec<(f64, f64)> = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap()
            .split(' ')
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect();
        let slope = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) / (b.0 - a.0);
        let s0 = slope(pts[0], pts[1]);
        for w in pts.windows(2) {
            assert!((slope(w[0], w[1]) - s0).abs() < 0.05);
        }
    }

    #[test]
    fn output_is_deterministic_and_escaped() {
        let t = read_table("# cfg -- x\nn,a<b\n0,1\n1,2\n").unwrap();
        let a = render_svg(&t, &spec(false)).unwrap();
        let b = render_svg(&t, &spec(false)).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("a&lt;b"));
        assert!(a.contains("<!-- cfg - - x -->"));
    }

    #[test]
    fn nonpositive_values_break_log_lines() {
        let t = read_table("n,d\n0,1\n1,0\n2,0.1\n3,0.01\n").unwrap();
        let svg = render_svg(&t, &spec(true)).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
