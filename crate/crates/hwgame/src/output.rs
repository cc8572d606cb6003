//! CSV and JSON writers with a fixed, round-trip exact number format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use hwgame_core::curve::CoefficientCurve;
use serde::Serialize;

/// 17 significant digits: enough to round-trip any `f64`.
pub fn number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header row, then one row per record.
pub fn csv<R: AsRef<[f64]>>(header: &[String], rows: impl IntoIterator<Item = R>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, v) in row.as_ref().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&number(*v));
        }
        out.push('\n');
    }
    out
}

/// Columns `t, <name>` for scalars or `t, <name>_1, ..., <name>_n` for vectors.
pub fn curve_csv(name: &str, curve: &CoefficientCurve) -> String {
    let width = curve.width();
    let mut header = vec!["t".to_string()];
    if width == 1 {
        header.push(name.to_string());
    } else {
        header.extend((1..=width).map(|i| format!("{name}_{i}")));
    }
    let rows = curve.breakpoints().iter().enumerate().map(|(i, &t)| {
        let mut row = Vec::with_capacity(width + 1);
        row.push(t);
        row.extend_from_slice(curve.value_at(i));
        row
    });
    csv(&header, rows)
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable output");
    s.push('\n');
    s
}

pub fn write(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)
}

/// `[a, b, c]` with 17 significant digits, for messages.
pub fn vector(v: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{}", number(*x));
    }
    s.push(']');
    s
}
