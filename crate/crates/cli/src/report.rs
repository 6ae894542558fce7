use std::fmt::Write as _;

use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    /// Monetary amount.
    Amount(f64),
    /// Fraction shown as a percentage in tables.
    Percent(Option<f64>),
    /// Dimensionless value shown at full precision everywhere.
    Real(f64),
    Count(usize),
    Flag(bool),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn display(&self, precision: usize) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Amount(x) => thousands(*x, precision),
            Cell::Percent(Some(x)) => format!("{:.*}%", precision, 100.0 * x),
            Cell::Percent(None) => "-".into(),
            Cell::Real(x) => format!("{x:?}"),
            Cell::Count(n) => n.to_string(),
            Cell::Flag(b) => if *b { "yes" } else { "no" }.into(),
        }
    }

    fn raw(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Amount(x) | Cell::Real(x) | Cell::Percent(Some(x)) => format!("{x:?}"),
            Cell::Percent(None) => String::new(),
            Cell::Count(n) => n.to_string(),
            Cell::Flag(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Amount(x) | Cell::Real(x) | Cell::Percent(Some(x)) => {
                serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number)
            }
            Cell::Percent(None) => Value::Null,
            Cell::Count(n) => Value::from(*n),
            Cell::Flag(b) => Value::Bool(*b),
        }
    }

    fn right_aligned(&self) -> bool {
        !matches!(self, Cell::Text(_))
    }
}

/// `1234567.891` → `1,234,567.89` at precision 2.
pub fn thousands(x: f64, precision: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let fixed = format!("{:.*}", precision, x.abs());
    let (int, frac) = match fixed.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (fixed.as_str(), None),
    };
    let mut out = String::new();
    if x < 0.0 && fixed.chars().any(|c| c.is_ascii_digit() && c != '0') {
        out.push('-');
    }
    for (k, ch) in int.chars().enumerate() {
        if k > 0 && (int.len() - k) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if let Some(f) = frac {
        out.push('.');
        out.push_str(f);
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Shown after a rule in table mode; a normal row elsewhere.
    pub footer: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn render(&self, format: Format, precision: usize) -> String {
        match format {
            Format::Table => self.table(precision),
            Format::Csv => self.csv(),
            Format::Json => self.json(),
        }
    }

    fn table(&self, precision: usize) -> String {
        let body: Vec<Vec<(String, bool)>> = self
            .rows
            .iter()
            .chain(&self.footer)
            .map(|r| {
                r.iter()
                    .map(|c| (c.display(precision), c.right_aligned()))
                    .collect()
            })
            .collect();
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for row in &body {
            for (w, (s, _)) in widths.iter_mut().zip(row) {
                *w = (*w).max(s.chars().count());
            }
        }
        let line = |cells: &mut dyn Iterator<Item = (String, bool)>| -> String {
            let mut out = String::new();
            for (k, (s, right)) in cells.enumerate() {
                if k > 0 {
                    out.push_str("  ");
                }
                let pad = widths[k].saturating_sub(s.chars().count());
                if right {
                    out.push_str(&" ".repeat(pad));
                    out.push_str(&s);
                } else {
                    out.push_str(&s);
                    out.push_str(&" ".repeat(pad));
                }
            }
            out.trim_end().to_string()
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1));
        let mut out = String::new();
        let header: Vec<(String, bool)> = self
            .columns
            .iter()
            .enumerate()
            .map(|(k, c)| (c.clone(), self.rows.first().is_some_and(|r| r[k].right_aligned())))
            .collect();
        writeln!(out, "{}", line(&mut header.into_iter())).unwrap();
        writeln!(out, "{rule}").unwrap();
        for (k, row) in body.into_iter().enumerate() {
            if k == self.rows.len() {
                writeln!(out, "{rule}").unwrap();
            }
            writeln!(out, "{}", line(&mut row.into_iter())).unwrap();
        }
        out
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).unwrap();
        for row in self.rows.iter().chain(&self.footer) {
            w.write_record(row.iter().map(Cell::raw)).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    fn json(&self) -> String {
        let rows = |rows: &[Vec<Cell>]| -> Value {
            Value::Array(
                rows.iter()
                    .map(|r| {
                        let obj: Map<String, Value> = self
                            .columns
                            .iter()
                            .zip(r)
                            .map(|(k, c)| (k.clone(), c.json()))
                            .collect();
                        Value::Object(obj)
                    })
                    .collect(),
            )
        };
        let mut doc = Map::new();
        doc.insert("rows".into(), rows(&self.rows));
        if !self.footer.is_empty() {
            doc.insert("totals".into(), rows(&self.footer));
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(doc)).unwrap();
        s.push('\n');
        s
    }
}
