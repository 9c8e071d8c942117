//! CSV and JSON writers and the schemas of the JSON outputs.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{create_file, Result};

pub const SUMMARY_SCHEMA: &str = include_str!("../schemas/summary.schema.json");
pub const BOUNDS_SCHEMA: &str = include_str!("../schemas/bounds.schema.json");
pub const CURVE_SCHEMA: &str = include_str!("../schemas/curve.schema.json");
pub const REPLAY_SCHEMA: &str = include_str!("../schemas/replay.schema.json");

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut out = csv::Writer::from_writer(create_file(path)?);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<()> {
    let mut out = create_file(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Left-aligned text table.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut text = line(header.to_vec());
    text += &line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        text += &line(row.iter().map(String::as_str).collect());
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schemas_are_json() {
        for s in [SUMMARY_SCHEMA, BOUNDS_SCHEMA, CURVE_SCHEMA, REPLAY_SCHEMA] {
            let v: serde_json::Value = serde_json::from_str(s).unwrap();
            assert!(v.get("$schema").is_some());
        }
    }

    #[test]
    fn table_columns_align() {
        let t = render_table(&["a", "long"], &[vec!["xyz".into(), "1".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "a    long");
        assert_eq!(lines[1], "---  ----");
        assert_eq!(lines[2], "xyz  1");
    }
}
