//! Byte-stable JSON rendering: keys sorted, optional fixed significant digits
//! for non-integer numbers.
//!
//! Key order is enforced here instead of relying on the map type behind
//! `serde_json::Value`, whose ordering depends on crate features.

use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CanonicalFormat {
    /// Round floating-point numbers to this many significant digits.
    pub significant_digits: Option<usize>,
    pub pretty: bool,
}

impl CanonicalFormat {
    /// Compact, full precision. Used for request hashing.
    pub const COMPACT: CanonicalFormat = CanonicalFormat {
        significant_digits: None,
        pretty: false,
    };

    /// Pretty, 6 significant digits. Used for executable documents.
    pub const DOCUMENT: CanonicalFormat = CanonicalFormat {
        significant_digits: Some(6),
        pretty: true,
    };
}

pub fn to_canonical_string(value: &Value, format: CanonicalFormat) -> String {
    let mut out = String::new();
    write_value(&mut out, value, format, 0);
    if format.pretty {
        out.push('\n');
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Rounds `x` to `digits` significant digits.
pub fn round_significant(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    let text = format!("{:.*e}", digits.saturating_sub(1), x);
    let rounded: f64 = text.parse().unwrap_or(x);
    if rounded == 0.0 {
        0.0
    } else {
        rounded
    }
}

fn write_number(out: &mut String, n: &serde_json::Number, format: CanonicalFormat) {
    if n.is_i64() || n.is_u64() {
        out.push_str(&n.to_string());
        return;
    }
    let x = n.as_f64().unwrap_or(0.0);
    let x = match format.significant_digits {
        Some(d) => round_significant(x, d),
        None => x,
    };
    // -0.0 renders as 0
    let x = if x == 0.0 { 0.0 } else { x };
    if x.fract() == 0.0 && x.abs() < 1e15 {
        out.push_str(&format!("{x:.1}"));
    } else {
        out.push_str(&format!("{x}"));
    }
}

fn indent(out: &mut String, level: usize) {
    out.push('\n');
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, value: &Value, format: CanonicalFormat, level: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n, format),
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if format.pretty {
                    indent(out, level + 1);
                }
                write_value(out, item, format, level + 1);
            }
            if format.pretty {
                indent(out, level);
            }
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if format.pretty {
                    indent(out, level + 1);
                }
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push(':');
                if format.pretty {
                    out.push(' ');
                }
                write_value(out, &map[*key], format, level + 1);
            }
            if format.pretty {
                indent(out, level);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_regardless_of_input_order() {
        let a = json!({"b": 1, "a": {"d": [1, 2], "c": null}});
        let b = json!({"a": {"c": null, "d": [1, 2]}, "b": 1});
        assert_eq!(
            to_canonical_string(&a, CanonicalFormat::COMPACT),
            r#"{"a":{"c":null,"d":[1,2]},"b":1}"#
        );
        assert_eq!(
            to_canonical_string(&a, CanonicalFormat::COMPACT),
            to_canonical_string(&b, CanonicalFormat::COMPACT)
        );
    }

    #[test]
    fn floats_round_to_six_significant_digits() {
        let v = json!([0.123456789, 1.0, -0.0, 12345678.9, 1e-9, 0.70710678]);
        assert_eq!(
            to_canonical_string(&v, CanonicalFormat { significant_digits: Some(6), pretty: false }),
            "[0.123457,1.0,0.0,12345700.0,0.000000001,0.707107]"
        );
    }

    #[test]
    fn rounding_is_idempotent() {
        for x in [0.1234565, 3.14159265, -2.5e-7, 987654.321] {
            let once = round_significant(x, 6);
            assert_eq!(round_significant(once, 6), once);
        }
    }
}
