//! CSV/JSON emission and the human-readable summary table.

use std::fmt::Write as _;

/// A file produced by an experiment, kept in memory until the run succeeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// Minimal CSV builder: `,` separator, `.` decimals, `\n` line endings.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut c = Self::default();
        c.push_row(header.iter().map(|h| h.as_ref().to_string()));
        c
    }

    pub fn push_row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let mut first = true;
        for f in fields {
            if !first {
                self.buf.push(',');
            }
            first = false;
            self.buf.push_str(&f);
        }
        self.buf.push('\n');
    }

    pub fn finish(self, name: impl Into<String>) -> OutputFile {
        OutputFile {
            name: name.into(),
            contents: self.buf,
        }
    }
}

/// Shortest round-trip representation; empty for a missing value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn json_file(name: impl Into<String>, value: &impl serde::Serialize) -> OutputFile {
    let mut contents = serde_json::to_string_pretty(value).expect("results serialize to JSON");
    contents.push('\n');
    OutputFile {
        name: name.into(),
        contents,
    }
}

/// `x` to four significant digits.
pub fn sig4(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let e = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&e) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - e).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can carry into a new leading digit (9.9996 -> 10.000)
    let rounded: f64 = s.parse().expect("formatted float parses");
    if rounded.abs() >= 10f64.powi(e + 1) && decimals > 0 {
        let d = decimals - 1;
        return format!("{x:.d$}");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => sig4(*x),
            Cell::Empty => "-".into(),
        }
    }

    fn right_aligned(&self) -> bool {
        !matches!(self, Cell::Text(_))
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub title: String,
    pub seed: u64,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Summary {
    pub fn new(title: impl Into<String>, seed: u64, headers: &[&str]) -> Self {
        Self {
            title: title.into(),
            seed,
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

/// Aligned text table: text columns left-aligned, numbers right-aligned.
pub fn emit_summary(s: &Summary) -> String {
    let rendered: Vec<Vec<String>> = s.rows.iter().map(|r| r.iter().map(Cell::render).collect()).collect();
    let widths: Vec<usize> = (0..s.headers.len())
        .map(|j| {
            rendered
                .iter()
                .map(|r| r[j].chars().count())
                .chain(std::iter::once(s.headers[j].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let right: Vec<bool> = (0..s.headers.len())
        .map(|j| s.rows.first().is_some_and(|r| r[j].right_aligned()))
        .collect();
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (j, c) in cells.iter().enumerate() {
            if j > 0 {
                out.push_str("  ");
            }
            let pad = widths[j] - c.chars().count();
            if right[j] {
                out.push_str(&" ".repeat(pad));
                out.push_str(c);
            } else {
                out.push_str(c);
                if j + 1 < cells.len() {
                    out.push_str(&" ".repeat(pad));
                }
            }
        }
        out
    };
    let mut out = String::new();
    let _ = writeln!(out, "{} (seed {})", s.title, s.seed);
    let _ = writeln!(out, "{}", line(&s.headers));
    for r in &rendered {
        let _ = writeln!(out, "{}", line(r));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Histogram with Freedman–Diaconis bin width `2·IQR·n^{−1/3}`, at most 1000
/// bins.
pub fn freedman_diaconis(values: &[f64]) -> Histogram {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return Histogram {
            edges: vec![0.0, 1.0],
            counts: vec![0],
        };
    }
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
    let width = 2.0 * iqr * (v.len() as f64).powf(-1.0 / 3.0);
    let bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, 1000)
    } else {
        1
    };
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let step = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * step }).collect();
    let mut counts = vec![0u64; bins];
    for x in v {
        let i = (((x - lo) / step).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    Histogram { edges, counts }
}
