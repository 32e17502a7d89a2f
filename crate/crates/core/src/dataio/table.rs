use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};

/// Output layout for result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v.into())
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A rectangular result table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn header(&self) -> String {
        self.columns.join(",")
    }
}

/// Formats a number with six significant digits, `%g` style.
///
/// Zero (of either sign) prints as `0`; non-finite values print as
/// `nan`, `inf` or `-inf`.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };
    if (-4..6).contains(&exp) {
        let (int_part, frac_part) = if exp >= 0 {
            let split = (exp + 1) as usize;
            (digits[..split].to_string(), digits[split..].to_string())
        } else {
            let zeros = "0".repeat((-exp - 1) as usize);
            ("0".to_string(), format!("{zeros}{digits}"))
        };
        let frac = frac_part.trim_end_matches('0');
        if frac.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac}")
        }
    } else {
        let frac = digits[1..].trim_end_matches('0');
        let mant = if frac.is_empty() {
            digits[..1].to_string()
        } else {
            format!("{}.{frac}", &digits[..1])
        };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{mant}e{esign}{:02}", exp.abs())
    }
}

fn csv_field(cell: &Cell) -> String {
    match cell {
        Cell::Int(v) => v.to_string(),
        Cell::Num(v) => format_number(*v),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
    }
}

fn json_value(cell: &Cell) -> Value {
    match cell {
        Cell::Int(v) => Value::from(*v),
        Cell::Num(v) => format_number(*v)
            .parse::<f64>()
            .ok()
            .and_then(Number::from_f64)
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Cell::Text(s) => Value::String(s.clone()),
    }
}

/// Renders a table to text. Output depends only on the table contents.
pub fn render_table(table: &Table, format: Format) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument("refusing to export an empty table".into()));
    }
    match format {
        Format::Csv => {
            let mut out = table.header();
            out.push('\n');
            for row in &table.rows {
                let fields: Vec<String> = row.iter().map(csv_field).collect();
                out.push_str(&fields.join(","));
                out.push('\n');
            }
            Ok(out)
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let mut obj = Map::new();
                    for (col, cell) in table.columns.iter().zip(row) {
                        obj.insert(col.clone(), json_value(cell));
                    }
                    Value::Object(obj)
                })
                .collect();
            let mut out = serde_json::to_string_pretty(&Value::Array(rows))
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            out.push('\n');
            Ok(out)
        }
    }
}

/// Writes a table to `path`.
pub fn export_table(table: &Table, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let text = render_table(table, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
