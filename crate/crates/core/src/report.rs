//! Result tables with per-cell provenance, rendered as CSV, markdown or raw
//! full-precision CSV.

use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Closed-form bound.
    Analytic,
    /// Iterative eigenvalue or solver estimate.
    Lanczos,
    /// Dense eigensolve.
    Dense,
    /// A bound that carries no information (`c̲ ≤ 0`).
    Vacuous,
    /// Sampled from the coefficient field.
    Sampled,
    /// Measured while running (iteration counts, timings).
    Measured,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::Lanczos => "lanczos",
            Provenance::Dense => "dense",
            Provenance::Vacuous => "vacuous",
            Provenance::Sampled => "sampled",
            Provenance::Measured => "measured",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Text(String),
    Int(i64),
    Num(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub value: Value,
    /// `None` for key cells.
    pub tag: Option<Provenance>,
}

impl Cell {
    pub fn key(v: impl Into<String>) -> Self {
        Cell {
            value: Value::Text(v.into()),
            tag: None,
        }
    }

    pub fn key_int(v: usize) -> Self {
        Cell {
            value: Value::Int(v as i64),
            tag: None,
        }
    }

    pub fn num(v: f64, tag: Provenance) -> Self {
        Cell {
            value: Value::Num(v),
            tag: Some(tag),
        }
    }

    pub fn int(v: usize, tag: Provenance) -> Self {
        Cell {
            value: Value::Int(v as i64),
            tag: Some(tag),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self.value {
            Value::Num(x) => Some(x),
            Value::Int(i) => Some(i as f64),
            Value::Text(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
    Raw,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ResultTable {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        ResultTable {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn get(&self, row: usize, col: &str) -> Option<&Cell> {
        self.column(col).map(|c| &self.rows[row][c])
    }

    fn text(cell: &Cell, raw: bool) -> String {
        if cell.tag == Some(Provenance::Vacuous) && !raw {
            return "-".into();
        }
        match &cell.value {
            Value::Text(s) => s.clone(),
            Value::Int(i) => i.to_string(),
            Value::Num(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Value::Num(x) if raw => format!("{x:.16e}"),
            Value::Num(x) => format!("{x:.2}"),
        }
    }

    fn tagged(&self) -> Vec<bool> {
        (0..self.columns.len())
            .map(|c| self.rows.iter().any(|r| r[c].tag.is_some()))
            .collect()
    }

    /// Every value column is followed by a `<name>_src` provenance column.
    fn to_csv(&self, raw: bool) -> String {
        let tagged = self.tagged();
        let mut header = Vec::new();
        for (c, name) in self.columns.iter().enumerate() {
            header.push(csv_field(name));
            if tagged[c] {
                header.push(csv_field(&format!("{name}_src")));
            }
        }
        let mut out = header.join(",");
        out.push('\n');
        for row in &self.rows {
            let mut fields = Vec::new();
            for (c, cell) in row.iter().enumerate() {
                fields.push(csv_field(&Self::text(cell, raw)));
                if tagged[c] {
                    fields.push(cell.tag.map_or(String::new(), |t| t.name().to_string()));
                }
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    fn to_markdown(&self) -> String {
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|c| Self::text(c, false)).collect())
            .collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|c| {
                body.iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.columns[c].chars().count(), 3])
                    .max()
                    .unwrap()
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:>w$}"))
                .collect();
            format!("| {} |\n", parts.join(" | "))
        };
        let mut out = String::new();
        if !self.title.is_empty() {
            writeln!(out, "### {}\n", self.title).unwrap();
        }
        out.push_str(&line(&self.columns));
        let rule: Vec<String> = widths.iter().map(|&w| format!("{}:", "-".repeat(w - 1))).collect();
        out.push_str(&format!("|{}|\n", rule.iter().map(|r| format!(" {r} ")).collect::<Vec<_>>().join("|")));
        for r in &body {
            out.push_str(&line(r));
        }
        // One provenance line per column, listing every tag that occurs.
        let mut notes = Vec::new();
        for (c, name) in self.columns.iter().enumerate() {
            let mut tags: Vec<&str> = Vec::new();
            for r in &self.rows {
                if let Some(t) = r[c].tag {
                    if !tags.contains(&t.name()) {
                        tags.push(t.name());
                    }
                }
            }
            if !tags.is_empty() {
                notes.push(format!("{name}: {}", tags.join("/")));
            }
        }
        if !notes.is_empty() {
            writeln!(out, "\nsources: {}", notes.join("; ")).unwrap();
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(false),
            Format::Raw => self.to_csv(true),
            Format::Markdown => self.to_markdown(),
        }
    }
}
