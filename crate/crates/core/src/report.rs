//! Result tables with CSV and SVG output.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One table cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Seed(u64),
    Float(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Seed(s) => Some(*s as f64),
            Value::Float(x) => Some(*x),
            Value::Text(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Seed(s) => write!(f, "{s}"),
            // shortest round-trip representation, stable across runs
            Value::Float(x) => write!(f, "{x:e}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Int(i as i64)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

/// A named table with a fixed column order.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ReportTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        ReportTable {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::input(format!(
                "table {} expects {} columns, got {}",
                self.name,
                self.columns.len(),
                row.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column (text cells are skipped).
    pub fn floats(&self, name: &str) -> Vec<f64> {
        match self.column(name) {
            Some(c) => self.rows.iter().filter_map(|r| r[c].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::input(format!("CSV encoding: {e}"));
        w.write_record(&self.columns).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::input(format!("CSV encoding: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::input(format!("CSV encoding: {e}")))
    }
}

/// Which columns to draw as an SVG line plot.
#[derive(Clone, Debug)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    /// One polyline per distinct value of this column.
    pub series: Option<String>,
    pub log_x: bool,
    pub log_y: bool,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes the table as CSV (header row, RFC-4180 quoting) and optionally an SVG plot.
pub fn emit_report(table: &ReportTable, csv_path: &Path, plot: Option<(&Path, &PlotSpec)>) -> Result<()> {
    write_file(csv_path, &table.to_csv_string()?)?;
    if let Some((svg_path, spec)) = plot {
        write_file(svg_path, &render_svg(table, spec)?)?;
    }
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal line plot with one polyline per series.
pub fn render_svg(table: &ReportTable, spec: &PlotSpec) -> Result<String> {
    let xc = table.column(&spec.x).ok_or_else(|| Error::input(format!("no column {}", spec.x)))?;
    let yc = table.column(&spec.y).ok_or_else(|| Error::input(format!("no column {}", spec.y)))?;
    let sc = match &spec.series {
        Some(s) => Some(table.column(s).ok_or_else(|| Error::input(format!("no column {s}")))?),
        None => None,
    };
    let tx = |v: f64| if spec.log_x { v.log10() } else { v };
    let ty = |v: f64| if spec.log_y { v.log10() } else { v };
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for row in &table.rows {
        let (Some(x), Some(y)) = (row[xc].as_f64(), row[yc].as_f64()) else { continue };
        let (x, y) = (tx(x), ty(y));
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        let key = sc.map(|c| row[c].to_string()).unwrap_or_default();
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, pts)) => pts.push((x, y)),
            None => series.push((key, vec![(x, y)])),
        }
    }
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{a},{b} L{a},{c} L{d},{c}" stroke="black" fill="none"/>"#,
        a = pad,
        b = pad,
        c = h - pad,
        d = w - pad
    );
    let label = |name: &str, log: bool| if log { format!("log10 {name}") } else { name.to_string() };
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, label(&spec.x, spec.log_x));
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#,
        h / 2.0,
        h / 2.0,
        label(&spec.y, spec.log_y)
    );
    for (v, anchor, x, y) in [
        (x0, "start", px(x0), h - pad + 16.0),
        (x1, "end", px(x1), h - pad + 16.0),
        (y0, "end", pad - 4.0, py(y0)),
        (y1, "end", pad - 4.0, py(y1)),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for (i, (key, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, coords.join(" "));
        if !key.is_empty() {
            let ly = pad + 16.0 * i as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, w - pad - 90.0, xml_escape(key));
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: usize) -> ReportTable {
        let mut t = ReportTable::new("demo", &["eps", "seed", "note", "D"]);
        for i in 0..rows {
            t.push(vec![
                Value::Float(1.0 / (4 << i) as f64),
                Value::Seed(u64::MAX - i as u64),
                Value::Text("a,\"b\"".into()),
                Value::Float(0.1 * i as f64),
            ])
            .unwrap();
        }
        t
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        emit_report(&table(0), &p, None).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "eps,seed,note,D\n");
    }

    #[test]
    fn rows_quoting_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let (p, q, svg) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("a.svg"));
        let spec = PlotSpec {
            x: "eps".into(),
            y: "D".into(),
            series: Some("seed".into()),
            log_x: true,
            log_y: false,
        };
        emit_report(&table(3), &p, Some((&svg, &spec))).unwrap();
        emit_report(&table(3), &q, None).unwrap();
        let a = std::fs::read(&p).unwrap();
        assert_eq!(a, std::fs::read(&q).unwrap());
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("\"a,\"\"b\"\"\""));
        assert!(text.contains(&u64::MAX.to_string()));
        assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = emit_report(&table(1), &blocker.join("out.csv"), None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("file"));
    }

    #[test]
    fn bad_rows_are_rejected() {
        let mut t = ReportTable::new("x", &["a"]);
        assert!(t.push(vec![]).is_err());
    }
}
