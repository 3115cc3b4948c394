//! Record sinks for the three output formats.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

use crate::config::Format;

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes JSON objects as CSV rows (fixed columns), JSON lines, or aligned text.
pub struct Emitter {
    sink: Sink,
}

enum Sink {
    Csv(Box<csv::Writer<Box<dyn Write>>>, Vec<String>),
    Jsonl(Box<dyn Write>),
    Pretty(Box<dyn Write>, bool),
}

impl Emitter {
    pub fn new<S: AsRef<str>>(format: Format, out: Box<dyn Write>, columns: &[S]) -> Result<Self> {
        let sink = match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                let columns: Vec<String> = columns.iter().map(|c| c.as_ref().to_string()).collect();
                w.write_record(&columns)?;
                Sink::Csv(Box::new(w), columns)
            }
            Format::Jsonl => Sink::Jsonl(out),
            Format::Pretty => Sink::Pretty(out, true),
        };
        Ok(Self { sink })
    }

    pub fn record(&mut self, value: &Value) -> Result<()> {
        match &mut self.sink {
            Sink::Csv(w, columns) => {
                w.write_record(columns.iter().map(|c| cell(value.get(c))))?;
            }
            Sink::Jsonl(w) => {
                serde_json::to_writer(&mut *w, value)?;
                w.write_all(b"\n")?;
            }
            Sink::Pretty(w, first) => {
                if !*first {
                    writeln!(w)?;
                }
                *first = false;
                let Some(obj) = value.as_object() else {
                    writeln!(w, "{value}")?;
                    return Ok(());
                };
                let fields: Vec<_> = obj.iter().filter(|(_, v)| !v.is_null()).collect();
                let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                for (k, v) in fields {
                    writeln!(w, "{k:>width$}  {}", cell(Some(v)))?;
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self.sink {
            Sink::Csv(mut w, _) => w.flush()?,
            Sink::Jsonl(mut w) | Sink::Pretty(mut w, _) => w.flush()?,
        }
        Ok(())
    }
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(items)) => items.iter().map(|i| cell(Some(i))).collect::<Vec<_>>().join(" "),
        Some(other) => other.to_string(),
    }
}
