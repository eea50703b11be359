//! Canonical JSON: sorted keys, two-space indentation, floats with 17
//! significant digits.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// `+∞`/`−∞` as the strings `"inf"`/`"-inf"`, NaN as `null`.
pub fn float(v: f64) -> Value {
    if v.is_infinite() {
        Value::String(if v > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
    }
}

pub fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| float(*x)).collect())
}

pub fn matrix(m: &nalgebra::DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| floats(&m.row(i).iter().copied().collect::<Vec<_>>())).collect())
}

pub fn render(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => write!(out, "{b}").unwrap(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                write!(out, "{:.16e}", n.as_f64().expect("finite")).unwrap();
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Short numeric rows stay on one line.
            if items.iter().all(|x| x.is_number() || x.is_string() || x.is_null()) && items.len() <= 8 {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_value(out, &map[*k], indent + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}
