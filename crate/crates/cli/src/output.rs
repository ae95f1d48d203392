use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{Format, RunConfig};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// One run, as emitted on stdout.
#[derive(Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub result: T,
    /// Seconds; only filled with `--timing`, so that default output is
    /// reproducible byte for byte.
    pub wall_time: Option<f64>,
}

pub fn render<T: Serialize>(report: &Report<'_, T>, format: Format) -> Result<String, CliError> {
    let value = serde_json::to_value(report).map_err(|e| CliError::Usage(format!("serialization: {e}")))?;
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&value).map_err(|e| CliError::Usage(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => to_csv(&value),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten_into(&key(k), x, out);
            }
        }
        Value::Array(items) if items.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let joined: Vec<String> = items.iter().map(scalar).collect();
            out.push((prefix.to_string(), joined.join(";")));
        }
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten_into(&key(&i.to_string()), x, out);
            }
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

/// Flat projection: nested keys are joined with `.`, scalar arrays with `;`.
/// A `result.cells` array becomes one row per cell.
fn to_csv(report: &Value) -> Result<String, CliError> {
    let mut shared = report.clone();
    let cells = shared
        .get_mut("result")
        .and_then(Value::as_object_mut)
        .and_then(|r| r.remove("cells"));
    let mut base = Vec::new();
    flatten_into("", &shared, &mut base);
    let rows: Vec<Vec<(String, String)>> = match cells {
        Some(Value::Array(items)) => items
            .iter()
            .map(|cell| {
                let mut row = base.clone();
                flatten_into("cell", cell, &mut row);
                row
            })
            .collect(),
        Some(other) => {
            let mut row = base.clone();
            let mut m = Map::new();
            m.insert("cells".into(), other);
            flatten_into("result", &Value::Object(m), &mut row);
            vec![row]
        }
        None => vec![base],
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        w.write_record(first.iter().map(|(k, _)| k.as_str()))
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    for row in &rows {
        w.write_record(row.iter().map(|(_, v)| v.as_str()))
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn nested_objects_flatten_with_dots() {
        let v = json!({"a": 1, "b": {"c": "x", "d": [1, 2]}, "e": null});
        let csv = to_csv(&v).unwrap();
        assert_eq!(csv, "a,b.c,b.d,e\n1,x,1;2,\n");
    }

    #[test]
    fn cells_become_rows() {
        let v = json!({"command": "optimize", "result": {"all_pass": true, "cells": [{"k": 1}, {"k": 2}]}});
        let csv = to_csv(&v).unwrap();
        assert_eq!(
            csv,
            "command,result.all_pass,cell.k\noptimize,true,1\noptimize,true,2\n"
        );
    }
}
