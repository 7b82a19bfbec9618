//! CSV and JSON writers. Every file starts with a `# meta: {json}` line;
//! the remaining lines are data and are reproducible byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

pub const META_PREFIX: &str = "# meta: ";

/// Shortest round-trip representation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv(path: &Path, meta: &Value, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut s = String::new();
    writeln!(s, "{META_PREFIX}{}", serde_json::to_string(meta)?).unwrap();
    writeln!(s, "{}", header.join(",")).unwrap();
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        writeln!(s, "{}", r.join(",")).unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

/// JSON document `{"meta": ..., <data fields>}`.
pub fn write_json(path: &Path, meta: &Value, data: Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut doc = serde_json::Map::new();
    doc.insert("meta".into(), meta.clone());
    match data {
        Value::Object(m) => doc.extend(m),
        other => {
            doc.insert("data".into(), other);
        }
    }
    fs::write(path, serde_json::to_string_pretty(&Value::Object(doc))? + "\n")?;
    Ok(())
}

/// The metadata block of a CSV or JSON output.
pub fn read_meta(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    if let Some(line) = text.lines().next().and_then(|l| l.strip_prefix(META_PREFIX)) {
        return Ok(serde_json::from_str(line)?);
    }
    let v: Value = serde_json::from_str(&text)?;
    v.get("meta").cloned().ok_or_else(|| Error::Domain(format!("{} has no metadata block", path.display())))
}

/// Data content of an output file with the metadata removed.
pub fn data_rows(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    if text.starts_with(META_PREFIX) {
        return Ok(text.lines().skip(1).map(str::to_string).collect());
    }
    let mut v: Value = serde_json::from_str(&text)?;
    if let Value::Object(m) = &mut v {
        m.remove("meta");
    }
    Ok(serde_json::to_string_pretty(&v)?.lines().map(str::to_string).collect())
}
