//! Primitive JSON values and the JSON-Schema kind lattice.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

/// Canonical bit pattern of a finite f64. `-0.0` folds into `0.0`, so integers
/// and equal-valued floats share one identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NumberBits(u64);

impl NumberBits {
    pub fn new(x: f64) -> Self {
        let x = if x == 0.0 { 0.0 } else { x };
        Self(x.to_bits())
    }

    pub fn value(self) -> f64 {
        f64::from_bits(self.0)
    }
}

/// A JSON leaf: what a value token stands for.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    Null,
    Bool(bool),
    Number(NumberBits),
    String(String),
}

impl Primitive {
    /// `None` for objects and arrays.
    pub fn from_json(v: &Value) -> Option<Primitive> {
        match v {
            Value::Null => Some(Primitive::Null),
            Value::Bool(b) => Some(Primitive::Bool(*b)),
            Value::Number(n) => n.as_f64().map(|x| Primitive::Number(NumberBits::new(x))),
            Value::String(s) => Some(Primitive::String(s.clone())),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Primitive::Null => Value::Null,
            Primitive::Bool(b) => Value::Bool(*b),
            Primitive::Number(n) => number_to_json(n.value()),
            Primitive::String(s) => Value::String(s.clone()),
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            Primitive::Null => Kind::Null,
            Primitive::Bool(_) => Kind::Boolean,
            Primitive::Number(n) if is_integral(n.value()) => Kind::Integer,
            Primitive::Number(_) => Kind::Number,
            Primitive::String(_) => Kind::String,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Primitive::Number(n) => Some(n.value()),
            _ => None,
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

/// JSON-Schema type names. `Integer` means a number with zero fractional part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Null,
    Boolean,
    Integer,
    Number,
    String,
    Object,
    Array,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::Null,
        Kind::Boolean,
        Kind::Integer,
        Kind::Number,
        Kind::String,
        Kind::Object,
        Kind::Array,
    ];

    pub fn of(v: &Value) -> Kind {
        match v {
            Value::Null => Kind::Null,
            Value::Bool(_) => Kind::Boolean,
            Value::Number(n) => {
                if n.as_f64().map(is_integral).unwrap_or(true) {
                    Kind::Integer
                } else {
                    Kind::Number
                }
            }
            Value::String(_) => Kind::String,
            Value::Array(_) => Kind::Array,
            Value::Object(_) => Kind::Object,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Null => "null",
            Kind::Boolean => "boolean",
            Kind::Integer => "integer",
            Kind::Number => "number",
            Kind::String => "string",
            Kind::Object => "object",
            Kind::Array => "array",
        }
    }

    pub fn from_name(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }
}

pub fn is_integral(x: f64) -> bool {
    x.is_finite() && x.fract() == 0.0
}

/// Integral values inside the exactly representable range are written as JSON
/// integers; everything else as a float.
pub fn number_to_json(x: f64) -> Value {
    if is_integral(x) && x.abs() < 9.007_199_254_740_992e15 {
        Value::Number(Number::from(x as i64))
    } else {
        Number::from_f64(x)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

/// Order-insensitive, number-canonical serialization. Two values that JSON
/// Schema considers equal map to the same string.
pub fn canonical_string(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Number(n) => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            out.push_str(&number_to_json(x).to_string());
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push(':');
                write_canonical(&map[k.as_str()], out);
            }
            out.push('}');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// Structural equality that ignores object key order and compares numbers by
/// value, with absolute tolerance `tol` on numbers.
pub fn json_approx_eq(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= tol,
            _ => false,
        },
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(a, b)| json_approx_eq(a, b, tol))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter()
                    .all(|(k, v)| y.get(k).is_some_and(|w| json_approx_eq(v, w, tol)))
        }
        _ => a == b,
    }
}

/// Key order of every object, depth first. Used to check order preservation.
pub fn key_order(v: &Value) -> Vec<Vec<String>> {
    fn walk(v: &Value, out: &mut Vec<Vec<String>>) {
        match v {
            Value::Object(m) => {
                out.push(m.keys().cloned().collect());
                m.values().for_each(|c| walk(c, out));
            }
            Value::Array(items) => items.iter().for_each(|c| walk(c, out)),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(v, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn integers_and_equal_floats_share_identity() {
        let a = Primitive::from_json(&json!(3)).unwrap();
        let b = Primitive::from_json(&json!(3.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            Primitive::from_json(&json!(-0.0)),
            Primitive::from_json(&json!(0))
        );
        assert_eq!(a.kind(), Kind::Integer);
        assert_eq!(
            Primitive::from_json(&json!(2.5)).unwrap().kind(),
            Kind::Number
        );
    }

    #[test]
    fn canonical_string_ignores_key_order() {
        let a = json!({"b": 1, "a": [1.0, {"y": 2, "x": null}]});
        let b = json!({"a": [1, {"x": null, "y": 2.0}], "b": 1});
        assert_eq!(canonical_string(&a), canonical_string(&b));
    }

    #[test]
    fn approx_eq_tolerates_small_numeric_drift() {
        let a = json!({"x": 1.0, "y": ["s", true]});
        let b = json!({"y": ["s", true], "x": 1.0 + 1e-12});
        assert!(json_approx_eq(&a, &b, 1e-9));
        assert!(!json_approx_eq(
            &a,
            &json!({"x": 1.1, "y": ["s", true]}),
            1e-9
        ));
    }
}
