//! Input parsing and output formatting.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// A data row and its 1-based line number in the source.
pub struct Row {
    pub line: usize,
    pub values: Vec<f64>,
}

fn open_input(path: &str) -> CliResult<Box<dyn Read>> {
    if path == "-" {
        return Ok(Box::new(io::stdin()));
    }
    fs::File::open(path)
        .map(|f| Box::new(f) as Box<dyn Read>)
        .map_err(|e| CliError::io(path, e))
}

/// Parses one field: decimal point only, scientific notation accepted,
/// non-finite values rejected.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    let looks_numeric = !t.is_empty()
        && t.chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !looks_numeric {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads comma-separated numeric rows, skipping blank lines. Every row must
/// have `width` columns when given, otherwise the width of the first row.
pub fn read_rows(path: &str, width: Option<usize>) -> CliResult<Vec<Row>> {
    let reader = BufReader::new(open_input(path)?);
    let mut rows = Vec::new();
    let mut expected = width;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| CliError::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let values = text
            .split(',')
            .map(|field| {
                parse_number(field).ok_or_else(|| CliError::Line {
                    line: line_no,
                    message: format!("`{}` is not a finite number", field.trim()),
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        match expected {
            Some(w) if w != values.len() => {
                return Err(CliError::Line {
                    line: line_no,
                    message: format!("expected {w} columns, found {}", values.len()),
                })
            }
            None => expected = Some(values.len()),
            _ => {}
        }
        rows.push(Row { line: line_no, values });
    }
    Ok(rows)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes to `--output` or stdout.
pub fn emit(output: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match output {
        Some(p) => write_text(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

/// Six significant digits, `%g` style.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // the exponent after rounding decides between fixed and scientific form
    let sci = format!("{x:.5e}");
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let exp: i32 = e.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// Simple CSV builder.
pub struct Csv {
    out: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut out = header.join(",");
        out.push('\n');
        Self { out }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}
