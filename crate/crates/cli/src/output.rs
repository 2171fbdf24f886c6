//! Rendering of command results as a delimited table or as JSON.

use std::io::{self, Write};

use isrisk_core::experiments::format_number;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }

    fn delimited(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            // Round through the 9-digit text so both formats carry the same value.
            Cell::Num(x) => format_number(*x)
                .parse::<f64>()
                .ok()
                .and_then(Number::from_f64)
                .map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub command: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// Schema of the structured output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Structured {
    pub command: String,
    pub columns: Vec<String>,
    pub rows: Vec<Map<String, Value>>,
}

impl Table {
    pub fn new(command: &str, columns: &[&str]) -> Self {
        Self {
            command: command.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn structured(&self) -> Structured {
        Structured {
            command: self.command.clone(),
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect())
                .collect(),
        }
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> io::Result<()> {
        match format {
            Format::Delimited => {
                writeln!(out, "{}", self.columns.join(","))?;
                for r in &self.rows {
                    let cells: Vec<String> = r.iter().map(Cell::delimited).collect();
                    writeln!(out, "{}", cells.join(","))?;
                }
                Ok(())
            }
            Format::Structured => {
                serde_json::to_writer_pretty(&mut out, &self.structured())?;
                writeln!(out)
            }
        }
    }
}
