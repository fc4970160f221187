use std::io::Write;

use anyhow::Context;
use serde_json::Value;

use crate::output::num;
use crate::{ReportArgs, Status};

/// Numeric leaves of a summary document as `(dotted path, value)` pairs.
///
/// Booleans become 0/1, `Acc` entries become `acc_<threshold>` siblings of the
/// list that held them, and the echoed loss configuration is skipped.
pub fn flatten_summary(doc: &Value) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    walk(doc, String::new(), &mut out);
    out
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_owned()
    } else {
        format!("{prefix}.{key}")
    }
}

fn walk(v: &Value, path: String, out: &mut Vec<(String, f64)>) {
    match v {
        Value::Number(n) => out.extend(n.as_f64().map(|x| (path, x))),
        Value::Bool(b) => out.push((path, if *b { 1.0 } else { 0.0 })),
        Value::Array(items) => {
            let parent = match path.rsplit_once('.') {
                Some((p, _)) => p,
                None => "",
            };
            for (i, item) in items.iter().enumerate() {
                if let (Some(t), Some(f)) = (
                    item.get("threshold_deg").and_then(Value::as_f64),
                    item.get("fraction").and_then(Value::as_f64),
                ) {
                    out.push((join(parent, &format!("acc_{t}")), f));
                } else {
                    walk(item, join(&path, &i.to_string()), out);
                }
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                if path.is_empty() && k == "config" {
                    continue;
                }
                walk(item, join(&path, k), out);
            }
        }
        Value::Null | Value::String(_) => {}
    }
}

pub fn report(a: &ReportArgs, stdout: &mut dyn Write) -> anyhow::Result<Status> {
    let mut rows = Vec::new();
    for path in &a.inputs {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let doc: Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let command = doc
            .get("command")
            .and_then(Value::as_str)
            .unwrap_or("unknown")
            .to_owned();
        let source = path.display().to_string();
        for (metric, value) in flatten_summary(&doc) {
            rows.push([source.clone(), command.clone(), metric, num(value)]);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "command", "metric", "value"])?;
    for r in &rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    match &a.out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => stdout.write_all(&bytes)?,
    }
    Ok(Status::Success)
}
