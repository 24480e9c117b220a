use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use hopf_energy::report::Envelope;
use hopf_energy::{Error, Result};
use serde::Serialize;

use crate::config::Format;

/// A rendered command result.
pub struct Rendered {
    pub json: String,
    pub csv: String,
    pub pretty: String,
}

impl Rendered {
    pub fn new<T: Serialize>(env: &Envelope<T>, csv: String, pretty: String) -> Result<Self> {
        Ok(Rendered { json: env.to_json()?, csv, pretty })
    }

    pub fn write(&self, format: Format, out: Option<&Path>) -> Result<()> {
        let body = match format {
            Format::Json => &self.json,
            Format::Csv => &self.csv,
            Format::Pretty => &self.pretty,
        };
        match out {
            Some(p) => std::fs::write(p, body)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(body.as_bytes())?;
                stdout.flush()?;
            }
        }
        Ok(())
    }
}

pub fn csv_rows<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

/// Fixed-width text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut s, &mut header.iter().copied());
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(s, "{}", rule.join("  "));
    for r in rows {
        line(&mut s, &mut r.iter().map(String::as_str));
    }
    s
}

pub fn sci(x: f64) -> String {
    format!("{x:.3e}")
}

pub fn fixed(x: f64) -> String {
    format!("{x:.10}")
}

pub fn verdict(ok: bool) -> String {
    if ok { "PASS" } else { "FAIL" }.to_string()
}

pub fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map(f).unwrap_or_else(|| "-".into())
}
