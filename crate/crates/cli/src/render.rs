//! Static SVG figures from exported distributions.
//!
//! Heatmaps encode magnitude as brightness and phase as hue; profiles draw
//! the real and imaginary parts as lines. Coordinates are printed with a
//! fixed precision, so the output bytes depend only on the input.

use std::f64::consts::PI;
use std::fmt::Write as _;

use qergo_core::{JointQuasiProb, C64};
use serde_json::Value;

use crate::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Style {
    Heatmap,
    Profile,
}

/// Complex values on a labelled grid; `None` marks undefined cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<Option<C64>>>,
    pub row_axis: String,
    pub col_axis: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub x_axis: String,
    pub x: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

pub fn render_file(path: &std::path::Path, style: Style) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    render_str(&text, style)
}

pub fn render_str(input: &str, style: Style) -> Result<String> {
    let json = input.trim_start().starts_with('{');
    match (style, json) {
        (Style::Heatmap, true) => Ok(heatmap_svg(&grid_from_json(input)?)),
        (Style::Heatmap, false) => Ok(heatmap_svg(&grid_from_csv(input)?)),
        (Style::Profile, true) => Ok(profile_svg(&profile_from_json(input)?)),
        (Style::Profile, false) => Ok(profile_svg(&profile_from_csv(input)?)),
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse { line, message: message.into() }
}

// ---- CSV -------------------------------------------------------------------

struct Table {
    header: Vec<String>,
    /// `(line, fields)`
    rows: Vec<(u64, Vec<String>)>,
    last_line: u64,
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| parse_err(1, format!("missing column `{name}` in header")))
    }
}

fn read_csv(input: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(input.as_bytes());
    let line_of = |e: &csv::Error| e.position().map_or(1, |p| p.line());
    let header: Vec<String> = rdr.headers().map_err(|e| parse_err(line_of(&e), e.to_string()))?.iter().map(str::to_string).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(parse_err(1, "empty input"));
    }
    let mut rows = Vec::new();
    let mut last_line = 1;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let msg = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => format!("expected {expected_len} fields, found {len}"),
                _ => e.to_string(),
            };
            parse_err(line_of(&e), msg)
        })?;
        last_line = rec.position().map_or(last_line + 1, |p| p.line());
        rows.push((last_line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(parse_err(2, "no data rows"));
    }
    Ok(Table { header, rows, last_line })
}

fn number(line: u64, field: &str, name: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| parse_err(line, format!("`{field}` in column `{name}` is not a number")))
}

/// Joint exports (`a_label,b_label,re,im`), `a` major.
fn grid_from_csv(input: &str) -> Result<Grid> {
    let t = read_csv(input)?;
    let (ca, cb, cr, ci) = (t.require("a_label")?, t.require("b_label")?, t.require("re")?, t.require("im")?);
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    let mut entries = Vec::with_capacity(t.rows.len());
    for (line, f) in &t.rows {
        let (ra, rb) = (&f[ca], &f[cb]);
        if !rows.contains(ra) {
            rows.push(ra.clone());
        }
        if !cols.contains(rb) {
            cols.push(rb.clone());
        }
        entries.push((ra.clone(), rb.clone(), C64::new(number(*line, &f[cr], "re")?, number(*line, &f[ci], "im")?), *line));
    }
    let mut cells = vec![vec![None; cols.len()]; rows.len()];
    for (ra, rb, v, line) in entries {
        let (i, j) = (rows.iter().position(|r| *r == ra).unwrap(), cols.iter().position(|c| *c == rb).unwrap());
        if cells[i][j].replace(v).is_some() {
            return Err(parse_err(line, format!("duplicate cell ({ra}, {rb})")));
        }
    }
    if let Some((i, j)) = (0..rows.len()).flat_map(|i| (0..cols.len()).map(move |j| (i, j))).find(|&(i, j)| cells[i][j].is_none()) {
        return Err(parse_err(t.last_line + 1, format!("grid is incomplete: no entry for ({}, {})", rows[i], cols[j])));
    }
    Ok(Grid { rows, cols, cells, row_axis: "a".into(), col_axis: "b".into() })
}

/// Lattice profiles (`x,re,im,…`) or wavefunction scans (`x_index,re,im,…`).
fn profile_from_csv(input: &str) -> Result<Profile> {
    let t = read_csv(input)?;
    let (cx, x_axis) = match (t.column("x"), t.column("x_index")) {
        (Some(c), _) => (c, "x"),
        (None, Some(c)) => (c, "x_index"),
        (None, None) => return Err(parse_err(1, "missing column `x` or `x_index` in header")),
    };
    let (cr, ci) = (t.require("re")?, t.require("im")?);
    let mut p = Profile { x_axis: x_axis.into(), x: vec![], re: vec![], im: vec![] };
    for (line, f) in &t.rows {
        p.x.push(number(*line, &f[cx], x_axis)?);
        p.re.push(number(*line, &f[cr], "re")?);
        p.im.push(number(*line, &f[ci], "im")?);
    }
    Ok(p)
}

// ---- JSON ------------------------------------------------------------------

fn parse_json(input: &str) -> Result<Value> {
    serde_json::from_str(input).map_err(|e| parse_err(e.line() as u64, e.to_string()))
}

fn floats(v: &Value, what: &str) -> Result<Vec<f64>> {
    v.as_array()
        .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
        .ok_or_else(|| parse_err(1, format!("`{what}` is not a list of numbers")))
}

fn labels(v: &Value, what: &str) -> Result<Vec<String>> {
    v.get("labels")
        .and_then(Value::as_array)
        .and_then(|a| a.iter().map(|s| s.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
        .ok_or_else(|| parse_err(1, format!("basis `{what}` has no labels")))
}

/// A joint export, a kd export carrying a joint, or a bare conditional
/// table (rows `m`, one column per `(a,b)` pair).
fn grid_from_json(input: &str) -> Result<Grid> {
    let doc = parse_json(input)?;
    let joint = doc.get("joint").unwrap_or(&doc);
    if joint.get("A").is_some() {
        let j = JointQuasiProb::from_json(&joint.to_string()).map_err(|e| parse_err(1, format!("joint: {e}")))?;
        let d = j.dim();
        return Ok(Grid {
            rows: j.a_basis().labels().to_vec(),
            cols: j.b_basis().labels().to_vec(),
            cells: (0..d).map(|a| (0..d).map(|b| Some(j.get(a, b))).collect()).collect(),
            row_axis: "a".into(),
            col_axis: "b".into(),
        });
    }
    let table = doc.get("table").unwrap_or(&doc);
    let bases = table.get("bases").ok_or_else(|| parse_err(1, "expected a joint or conditional-table export"))?;
    let (m_labels, a_labels, b_labels) = (labels(&bases["M"], "M")?, labels(&bases["A"], "A")?, labels(&bases["B"], "B")?);
    let d = m_labels.len();
    let entry = |key: &str, m: usize, a: usize, b: usize| table[key][m][a][b].as_f64();
    let mut cols = Vec::with_capacity(d * d);
    let mut cells = vec![Vec::with_capacity(d * d); d];
    for a in 0..d {
        for b in 0..d {
            cols.push(format!("{}|{}", a_labels[a], b_labels[b]));
            let defined = table["defined_mask"][a][b].as_bool().ok_or_else(|| parse_err(1, "malformed defined_mask"))?;
            for (m, row) in cells.iter_mut().enumerate() {
                let v = match (entry("re", m, a, b), entry("im", m, a, b)) {
                    (Some(re), Some(im)) => C64::new(re, im),
                    _ => return Err(parse_err(1, format!("missing table entry ({m}, {a}, {b})"))),
                };
                row.push(defined.then_some(v));
            }
        }
    }
    Ok(Grid { rows: m_labels, cols, cells, row_axis: "m".into(), col_axis: "a|b".into() })
}

fn profile_from_json(input: &str) -> Result<Profile> {
    let doc = parse_json(input)?;
    let prof = doc.get("profile").ok_or_else(|| parse_err(1, "expected a lattice export with a `profile`"))?;
    let p = Profile { x_axis: "x".into(), x: floats(&prof["x"], "x")?, re: floats(&prof["re"], "re")?, im: floats(&prof["im"], "im")? };
    if p.re.len() != p.x.len() || p.im.len() != p.x.len() {
        return Err(parse_err(1, "profile arrays differ in length"));
    }
    Ok(p)
}

// ---- SVG -------------------------------------------------------------------

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Hue from phase, value from relative magnitude, full saturation.
fn phase_color(z: C64, max: f64) -> String {
    let v = if max > 0.0 { (z.norm() / max).clamp(0.0, 1.0) } else { 0.0 };
    let h = (z.arg() + PI) / (2.0 * PI) * 6.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let to = |c: f64| (c * v * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", to(r), to(g), to(b))
}

pub fn heatmap_svg(g: &Grid) -> String {
    const CELL: usize = 72;
    const LEFT: usize = 96;
    const TOP: usize = 56;
    let (w, h) = ((LEFT + CELL * g.cols.len() + 16).max(400), TOP + CELL * g.rows.len() + 16);
    let max = g.cells.iter().flatten().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="8" y="20">rows {} / columns {}; brightness |z| (max {:.4}), hue arg z</text>"#,
        escape(&g.row_axis),
        escape(&g.col_axis),
        max
    );
    for (j, c) in g.cols.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + j * CELL + CELL / 2, TOP - 8, escape(c));
    }
    for (i, r) in g.rows.iter().enumerate() {
        let y = TOP + i * CELL;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 8, y + CELL / 2 + 4, escape(r));
        for (j, cell) in g.cells[i].iter().enumerate() {
            let x = LEFT + j * CELL;
            match cell {
                Some(z) => {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="white"><title>{} {}: {:.6}{:+.6}i</title></rect>"#,
                        phase_color(*z, max),
                        escape(r),
                        escape(&g.cols[j]),
                        z.re,
                        z.im
                    );
                }
                None => {
                    let _ = writeln!(s, r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#cccccc" stroke="white"><title>undefined</title></rect>"##);
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn profile_svg(p: &Profile) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let (x0, x1) = p.x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let ymax = p.re.iter().chain(&p.im).fold(0.0f64, |m, v| m.max(v.abs()));
    let ymax = if ymax > 0.0 { ymax * 1.05 } else { 1.0 };
    let sx = |x: f64| PAD + (x - x0) / span * (W - 2.0 * PAD);
    let sy = |y: f64| H / 2.0 - y / ymax * (H / 2.0 - PAD);
    let line = |ys: &[f64]| p.x.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect::<Vec<_>>().join(" ");

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r##"<line x1="{PAD}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888888"/>"##, H / 2.0, W - PAD, H / 2.0);
    let _ = writeln!(s, r##"<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{:.2}" stroke="#888888"/>"##, H - PAD);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(&p.x_axis));
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"#, PAD - 4.0, PAD + 4.0, ymax);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"#, PAD - 4.0, H - PAD + 4.0, -ymax);
    let _ = writeln!(s, r#"<text x="{PAD}" y="{:.2}">{:.4}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{:.4}</text>"#, H - PAD + 16.0, x0, W - PAD, H - PAD + 16.0, x1);
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{}"/>"##, line(&p.re));
    let _ = writeln!(s, r##"<polyline fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="4 2" points="{}"/>"##, line(&p.im));
    let _ = writeln!(s, r##"<text x="{:.2}" y="24" fill="#1f77b4">re</text><text x="{:.2}" y="24" fill="#d62728">im</text>"##, W - PAD - 48.0, W - PAD - 16.0);
    s.push_str("</svg>\n");
    s
}
