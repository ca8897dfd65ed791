//! Output formatting: fixed significant-digit floats for JSON and CSV.
//!
//! Artifact outputs must be byte-identical across reruns, so every float is
//! printed through these helpers: 17 significant digits in JSON, 12 in CSV.

use serde::Serialize;

use crate::{Error, Result};

/// Scientific notation with the given number of significant digits.
pub fn sig(x: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), x)
}

/// JSON float convention: 17 significant digits.
pub fn sig17(x: f64) -> String {
    sig(x, 17)
}

/// CSV float convention: 12 significant digits.
pub fn sig12(x: f64) -> String {
    sig(x, 12)
}

struct Sig17Formatter;

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(sig17(value).as_bytes())
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(sig17(f64::from(value)).as_bytes())
    }
}

/// Serialize to JSON with every float at 17 significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sig17Formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Parse(format!("json serialization: {e}")))?;
    String::from_utf8(out).map_err(|e| Error::Parse(format!("json utf8: {e}")))
}

/// One CSV row of floats at 12 significant digits.
pub fn csv_row(values: &[f64]) -> String {
    values.iter().map(|&v| sig12(v)).collect::<Vec<_>>().join(",")
}
