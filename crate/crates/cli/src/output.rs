use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

/// Pretty JSON with a trailing newline.
pub(crate) fn json_text(value: &impl Serialize) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `value` to `path`, or to `stdout` when no path is given.
pub(crate) fn emit_json(
    value: &impl Serialize,
    path: Option<&Path>,
    stdout: &mut dyn Write,
) -> anyhow::Result<()> {
    let text = json_text(value)?;
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub(crate) fn write_csv(
    path: &Path,
    header: &[String],
    rows: &[Vec<String>],
) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Shortest round-trip decimal form, so CSV values parse back bit-exactly.
pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}
