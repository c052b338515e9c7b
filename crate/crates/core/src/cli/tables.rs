//! Tab-separated report tables and their markdown rendering.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Fixed-precision float cell; infinities and NaN spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Label of a recall target in column names, e.g. `75`.
pub fn recall_label(target: f64) -> String {
    format!("{}", (target * 100.0).round() as i64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Vec<String>>) {
        for r in rows {
            self.push(r);
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty table".into(),
            })?
            .split('\t')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let row: Vec<String> = l.split('\t').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("expected {} cells, found {}", header.len(), row.len()),
                });
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", self.header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(self.header.len()));
        for r in &self.rows {
            let _ = writeln!(out, "| {} |", r.join(" | "));
        }
        out
    }
}
