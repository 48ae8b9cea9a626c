//! Minimal numeric CSV: a header row and `{:.16e}` values.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("empty table")]
    Empty,
    #[error("line {line}: expected {expected} fields, found {found}")]
    Width { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse `{field}` as a number")]
    Number { line: usize, field: String },
}

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn table<I, R>(header: &[String], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.as_ref().iter().map(|v| num(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parse a table written by [`table`] (or any header + numeric rows).
pub fn parse(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), CsvError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or(CsvError::Empty)?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(CsvError::Width {
                line: i + 1,
                expected: header.len(),
                found: fields.len(),
            });
        }
        let row = fields
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| CsvError::Number {
                    line: i + 1,
                    field: f.trim().to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
