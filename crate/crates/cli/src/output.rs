//! Canonical output: JSON with sorted keys and every float written with 17
//! significant digits, CSV with the same float format.

use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

pub const OUTPUT_VERSION: u32 = 1;

/// `v` with 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

struct FixedFloats;

impl Formatter for FixedFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// One JSON document with `version` and `command` fields merged in.
pub fn json_document(command: &str, body: &impl Serialize) -> Result<String> {
    let mut value = serde_json::to_value(body)?;
    if let Value::Object(map) = &mut value {
        map.insert("version".into(), OUTPUT_VERSION.into());
        map.insert("command".into(), command.into());
    }
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf)?)
}

/// Writes `text` to `out`, or to standard output when `out` is `None`.
pub fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// CSV text from a header and rows of already formatted cells, with a
/// leading `version` column.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let version = OUTPUT_VERSION.to_string();
    w.write_record(std::iter::once("version").chain(header.iter().copied()))?;
    for r in rows {
        w.write_record(std::iter::once(version.as_str()).chain(r.iter().map(String::as_str)))?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?)
}
